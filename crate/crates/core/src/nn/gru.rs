//! Gated recurrent unit cell, batched over rows.
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! h̃  = tanh(x W_h + (r ⊙ h) U_h + b_h)
//! h′ = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use rand::Rng;

use super::loss::sigmoid;
use super::{NnError, Param, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Param,
    pub u_z: Param,
    pub b_z: Param,
    pub w_r: Param,
    pub u_r: Param,
    pub b_r: Param,
    pub w_h: Param,
    pub u_h: Param,
    pub b_h: Param,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Param::zeros(&[input, hidden]),
            u_z: Param::zeros(&[hidden, hidden]),
            b_z: Param::zeros(&[hidden]),
            w_r: Param::zeros(&[input, hidden]),
            u_r: Param::zeros(&[hidden, hidden]),
            b_r: Param::zeros(&[hidden]),
            w_h: Param::zeros(&[input, hidden]),
            u_h: Param::zeros(&[hidden, hidden]),
            b_h: Param::zeros(&[hidden]),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_z: Param::glorot(&[input, hidden], rng),
            u_z: Param::glorot(&[hidden, hidden], rng),
            b_z: Param::zeros(&[hidden]),
            w_r: Param::glorot(&[input, hidden], rng),
            u_r: Param::glorot(&[hidden, hidden], rng),
            b_r: Param::zeros(&[hidden]),
            w_h: Param::glorot(&[input, hidden], rng),
            u_h: Param::glorot(&[hidden, hidden], rng),
            b_h: Param::zeros(&[hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.value.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_z.value.rows()
    }

    pub fn params(&self) -> [&Param; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h,
            &self.u_h, &self.b_h,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Tensor,
    h: Tensor,
    z: Tensor,
    r: Tensor,
    rh: Tensor,
    cand: Tensor,
}

/// Gradients with respect to the step inputs.
#[derive(Debug, Clone)]
pub struct GruGrads {
    pub dx: Tensor,
    pub dh: Tensor,
}

fn gate(x: &Tensor, w: &Tensor, h: &Tensor, u: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let mut a = x.matmul(w)?;
    a.add_assign(&h.matmul(u)?);
    let bias = b.data();
    for i in 0..a.rows() {
        for (v, bb) in a.row_mut(i).iter_mut().zip(bias) {
            *v += bb;
        }
    }
    Ok(a)
}

pub fn gru_step(x: &Tensor, h: &Tensor, p: &GruParams) -> Result<Tensor, NnError> {
    gru_step_cached(x, h, p).map(|(y, _)| y)
}

pub fn gru_step_cached(
    x: &Tensor,
    h: &Tensor,
    p: &GruParams,
) -> Result<(Tensor, GruCache), NnError> {
    if x.rows() != h.rows() || x.cols() != p.input_dim() || h.cols() != p.hidden_dim() {
        return Err(NnError::Shape(format!(
            "gru step: x {}x{}, h {}x{}, cell {}->{}",
            x.rows(),
            x.cols(),
            h.rows(),
            h.cols(),
            p.input_dim(),
            p.hidden_dim()
        )));
    }
    let z = gate(x, &p.w_z.value, h, &p.u_z.value, &p.b_z.value)?.map(sigmoid);
    let r = gate(x, &p.w_r.value, h, &p.u_r.value, &p.b_r.value)?.map(sigmoid);
    let rh = r.zip_map(h, |a, b| a * b);
    let cand = gate(x, &p.w_h.value, &rh, &p.u_h.value, &p.b_h.value)?.map(f64::tanh);
    let mut out = h.clone();
    for (k, o) in out.data_mut().iter_mut().enumerate() {
        let zk = z.data()[k];
        *o = (1.0 - zk) * *o + zk * cand.data()[k];
    }
    let h = h.clone();
    let x = x.clone();
    Ok((
        out,
        GruCache {
            x,
            h,
            z,
            r,
            rh,
            cand,
        },
    ))
}

/// Accumulates parameter gradients into `p`; returns input gradients.
pub fn gru_step_backward(
    cache: &GruCache,
    p: &mut GruParams,
    dout: &Tensor,
) -> Result<GruGrads, NnError> {
    let n = dout.len();
    let mut da_z = vec![0.0; n];
    let mut da_n = vec![0.0; n];
    let mut dh = vec![0.0; n];
    for k in 0..n {
        let g = dout.data()[k];
        let z = cache.z.data()[k];
        let c = cache.cand.data()[k];
        let h = cache.h.data()[k];
        dh[k] = g * (1.0 - z);
        da_z[k] = g * (c - h) * z * (1.0 - z);
        da_n[k] = g * z * (1.0 - c * c);
    }
    let shape = dout.shape().to_vec();
    let da_z = Tensor::from_vec(&shape, da_z)?;
    let da_n = Tensor::from_vec(&shape, da_n)?;

    // candidate branch
    p.w_h.grad.add_assign(&cache.x.t_matmul(&da_n)?);
    p.u_h.grad.add_assign(&cache.rh.t_matmul(&da_n)?);
    p.b_h.grad.add_assign(&Tensor::vector(da_n.sum_rows()));
    let drh = da_n.matmul_t(&p.u_h.value)?;
    let mut da_r = vec![0.0; n];
    for k in 0..n {
        let r = cache.r.data()[k];
        dh[k] += drh.data()[k] * r;
        da_r[k] = drh.data()[k] * cache.h.data()[k] * r * (1.0 - r);
    }
    let da_r = Tensor::from_vec(&shape, da_r)?;

    p.w_z.grad.add_assign(&cache.x.t_matmul(&da_z)?);
    p.u_z.grad.add_assign(&cache.h.t_matmul(&da_z)?);
    p.b_z.grad.add_assign(&Tensor::vector(da_z.sum_rows()));
    p.w_r.grad.add_assign(&cache.x.t_matmul(&da_r)?);
    p.u_r.grad.add_assign(&cache.h.t_matmul(&da_r)?);
    p.b_r.grad.add_assign(&Tensor::vector(da_r.sum_rows()));

    let mut dx = da_z.matmul_t(&p.w_z.value)?;
    dx.add_assign(&da_r.matmul_t(&p.w_r.value)?);
    dx.add_assign(&da_n.matmul_t(&p.w_h.value)?);

    let mut dh = Tensor::from_vec(&shape, dh)?;
    dh.add_assign(&da_z.matmul_t(&p.u_z.value)?);
    dh.add_assign(&da_r.matmul_t(&p.u_r.value)?);
    Ok(GruGrads { dx, dh })
}
