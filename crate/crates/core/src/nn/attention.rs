//! Single-head scaled dot-product self-attention without masking or output
//! projection.

use rand::Rng;

use super::softmax::{softmax_rows, softmax_rows_backward};
use super::{NnError, Param, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
}

impl AttentionParams {
    pub fn new(w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Result<Self, NnError> {
        let d = w_q.rows();
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if w.shape() != [d, d] {
                return Err(NnError::Shape(format!(
                    "{name} must be {d}x{d}, got {:?}",
                    w.shape()
                )));
            }
        }
        Ok(Self {
            w_q: Param::new(w_q),
            w_k: Param::new(w_k),
            w_v: Param::new(w_v),
        })
    }

    pub fn init<R: Rng + ?Sized>(d_model: usize, rng: &mut R) -> Self {
        Self {
            w_q: Param::glorot(&[d_model, d_model], rng),
            w_k: Param::glorot(&[d_model, d_model], rng),
            w_v: Param::glorot(&[d_model, d_model], rng),
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_q.value.rows()
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.w_q, &mut self.w_k, &mut self.w_v]
    }

    pub fn params(&self) -> [&Param; 3] {
        [&self.w_q, &self.w_k, &self.w_v]
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    weights: Tensor,
}

impl AttentionCache {
    /// The n×n attention weight matrix.
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

/// `softmax(Q Kᵀ / √d) · V` with `Q = X W_q`, `K = X W_k`, `V = X W_v`.
pub fn self_attention(x: &Tensor, p: &AttentionParams) -> Result<Tensor, NnError> {
    self_attention_cached(x, p).map(|(y, _)| y)
}

pub fn self_attention_cached(
    x: &Tensor,
    p: &AttentionParams,
) -> Result<(Tensor, AttentionCache), NnError> {
    let d = p.d_model();
    if x.cols() != d {
        return Err(NnError::Shape(format!(
            "attention input has {} columns, model dim is {}",
            x.cols(),
            d
        )));
    }
    if x.rows() == 0 {
        return Err(NnError::Shape("attention over zero rows".into()));
    }
    let q = x.matmul(&p.w_q.value)?;
    let k = x.matmul(&p.w_k.value)?;
    let v = x.matmul(&p.w_v.value)?;
    let mut scores = q.matmul_t(&k)?;
    scores.scale(1.0 / (d as f64).sqrt());
    let weights = softmax_rows(&scores);
    let out = weights.matmul(&v)?;
    Ok((
        out,
        AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            weights,
        },
    ))
}

/// Accumulates parameter gradients into `p` and returns the gradient w.r.t. the input.
pub fn self_attention_backward(
    cache: &AttentionCache,
    p: &mut AttentionParams,
    dout: &Tensor,
) -> Result<Tensor, NnError> {
    let scale = 1.0 / (p.d_model() as f64).sqrt();
    let dv = cache.weights.t_matmul(dout)?;
    let dweights = dout.matmul_t(&cache.v)?;
    let mut dscores = softmax_rows_backward(&cache.weights, &dweights);
    dscores.scale(scale);
    let dq = dscores.matmul(&cache.k)?;
    let dk = dscores.t_matmul(&cache.q)?;

    p.w_q.grad.add_assign(&cache.x.t_matmul(&dq)?);
    p.w_k.grad.add_assign(&cache.x.t_matmul(&dk)?);
    p.w_v.grad.add_assign(&cache.x.t_matmul(&dv)?);

    let mut dx = dq.matmul_t(&p.w_q.value)?;
    dx.add_assign(&dk.matmul_t(&p.w_k.value)?);
    dx.add_assign(&dv.matmul_t(&p.w_v.value)?);
    Ok(dx)
}
