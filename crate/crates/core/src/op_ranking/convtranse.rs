//! ConvTransE decoder with a third input channel for projected text vectors.
//!
//! For a query `(s, r)` the decoder stacks `[h_s; rel_r; text · P]` as a
//! 3-channel signal of length `d`, applies same-padded 1-D convolutions,
//! ReLU, a fully connected layer back to `d`, and scores every entity by dot
//! product.

use rand::Rng;

use super::Op1Error;
use crate::nn::{linear, linear_backward, softmax_rows, Param, Tensor};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// `text_dim × d`, no bias so that a zero text vector gives a zero channel.
    pub text_proj: Param,
    /// `[kernels, 3, width]`.
    pub kernels: Param,
    pub kernel_bias: Param,
    /// `(kernels · d) × d`.
    pub fc_w: Param,
    pub fc_b: Param,
}

impl Decoder {
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        text_dim: usize,
        kernels: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let kb = (6.0 / ((CHANNELS + 1) * width) as f64).sqrt();
        Self {
            text_proj: Param::glorot(&[text_dim, dim], rng),
            kernels: Param::uniform(&[kernels, CHANNELS, width], kb, rng),
            kernel_bias: Param::zeros(&[kernels]),
            fc_w: Param::glorot(&[kernels * dim, dim], rng),
            fc_b: Param::zeros(&[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.fc_b.shape()[0]
    }

    pub fn text_dim(&self) -> usize {
        self.text_proj.shape()[0]
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn params(&self) -> [&Param; 5] {
        [
            &self.text_proj,
            &self.kernels,
            &self.kernel_bias,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 5] {
        [
            &mut self.text_proj,
            &mut self.kernels,
            &mut self.kernel_bias,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    queries: Vec<(usize, usize)>,
    text: Tensor,
    /// `b × (3·d)` stacked input signals.
    images: Tensor,
    /// `b × (kernels·d)` pre-activation feature maps.
    conv_pre: Tensor,
    features: Tensor,
    /// `b × d` query vectors scored against the entities.
    query_vecs: Tensor,
}

fn conv_forward(images: &Tensor, dec: &Decoder) -> Tensor {
    let (b, d) = (images.rows(), dec.dim());
    let (c_out, w) = (dec.num_kernels(), dec.width());
    let pad = (w - 1) / 2;
    let k = dec.kernels.value.data();
    let bias = dec.kernel_bias.value.data();
    let mut out = Tensor::zeros(&[b, c_out * d]);
    for i in 0..b {
        let img = images.row(i);
        let o = out.row_mut(i);
        for c in 0..c_out {
            for j in 0..d {
                let mut acc = bias[c];
                for ch in 0..CHANNELS {
                    for u in 0..w {
                        let pos = j + u;
                        if pos < pad || pos - pad >= d {
                            continue;
                        }
                        acc += k[(c * CHANNELS + ch) * w + u] * img[ch * d + pos - pad];
                    }
                }
                o[c * d + j] = acc;
            }
        }
    }
    out
}

/// Gradients for the kernels and bias (accumulated) and for the images.
fn conv_backward(images: &Tensor, dec: &mut Decoder, dpre: &Tensor) -> Tensor {
    let (b, d) = (images.rows(), dec.dim());
    let (c_out, w) = (dec.num_kernels(), dec.width());
    let pad = (w - 1) / 2;
    let mut dimg = Tensor::zeros(images.shape());
    let k = dec.kernels.value.data().to_vec();
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; c_out];
    for i in 0..b {
        let img = images.row(i);
        let g = dpre.row(i);
        let di = dimg.row_mut(i);
        for c in 0..c_out {
            for j in 0..d {
                let gv = g[c * d + j];
                if gv == 0.0 {
                    continue;
                }
                db[c] += gv;
                for ch in 0..CHANNELS {
                    for u in 0..w {
                        let pos = j + u;
                        if pos < pad || pos - pad >= d {
                            continue;
                        }
                        let idx = (c * CHANNELS + ch) * w + u;
                        dk[idx] += gv * img[ch * d + pos - pad];
                        di[ch * d + pos - pad] += gv * k[idx];
                    }
                }
            }
        }
    }
    for (o, v) in dec.kernels.grad.data_mut().iter_mut().zip(&dk) {
        *o += v;
    }
    for (o, v) in dec.kernel_bias.grad.data_mut().iter_mut().zip(&db) {
        *o += v;
    }
    dimg
}

/// Logits `b × |V|` for `(subject, relation)` queries. `text` has one row per
/// query (`b × text_dim`).
pub fn decoder_forward(
    entities: &Tensor,
    relations: &Tensor,
    text: &Tensor,
    queries: &[(usize, usize)],
    dec: &Decoder,
) -> Result<(Tensor, DecoderCache), Op1Error> {
    let d = dec.dim();
    let b = queries.len();
    if entities.cols() != d || relations.cols() != d {
        return Err(Op1Error::Config(format!(
            "decoder dim {d} vs entity {} / relation {} columns",
            entities.cols(),
            relations.cols()
        )));
    }
    if text.rows() != b || text.cols() != dec.text_dim() {
        return Err(Op1Error::Config(format!(
            "text matrix {:?} for {b} queries of text dim {}",
            text.shape(),
            dec.text_dim()
        )));
    }
    let text = text.clone().reshape(&[b, dec.text_dim()])?;
    let projected = text.matmul(&dec.text_proj.value)?;
    let mut images = Tensor::zeros(&[b, CHANNELS * d]);
    for (i, &(s, r)) in queries.iter().enumerate() {
        if s >= entities.rows() || r >= relations.rows() {
            return Err(Op1Error::Config(format!("query ({s}, {r}) out of range")));
        }
        let row = images.row_mut(i);
        row[..d].copy_from_slice(entities.row(s));
        row[d..2 * d].copy_from_slice(relations.row(r));
        row[2 * d..].copy_from_slice(projected.row(i));
    }
    let conv_pre = conv_forward(&images, dec);
    let features = conv_pre.map(|v| v.max(0.0));
    let query_vecs = linear(&features, &dec.fc_w.value, &dec.fc_b.value)?;
    let logits = query_vecs.matmul_t(entities)?;
    Ok((
        logits,
        DecoderCache {
            queries: queries.to_vec(),
            text,
            images,
            conv_pre,
            features,
            query_vecs,
        },
    ))
}

/// Accumulates decoder gradients; adds into `dent` and `drel`.
pub fn decoder_backward(
    cache: &DecoderCache,
    entities: &Tensor,
    dec: &mut Decoder,
    dlogits: &Tensor,
    dent: &mut Tensor,
    drel: &mut Tensor,
) -> Result<(), Op1Error> {
    let d = dec.dim();
    dent.add_assign(&dlogits.t_matmul(&cache.query_vecs)?);
    let dq = dlogits.matmul(entities)?;
    let (dfeat, dw, db) = linear_backward(&cache.features, &dec.fc_w.value, &dq)?;
    dec.fc_w.grad.add_assign(&dw);
    dec.fc_b.grad.add_assign(&db);
    let dpre = dfeat.zip_map(&cache.conv_pre, |g, p| if p > 0.0 { g } else { 0.0 });
    let dimg = conv_backward(&cache.images, dec, &dpre);
    let mut dproj = Tensor::zeros(&[cache.queries.len(), d]);
    for (i, &(s, r)) in cache.queries.iter().enumerate() {
        let row = dimg.row(i);
        for (o, v) in dent.row_mut(s).iter_mut().zip(&row[..d]) {
            *o += v;
        }
        for (o, v) in drel.row_mut(r).iter_mut().zip(&row[d..2 * d]) {
            *o += v;
        }
        dproj.row_mut(i).copy_from_slice(&row[2 * d..]);
    }
    dec.text_proj.grad.add_assign(&cache.text.t_matmul(&dproj)?);
    Ok(())
}

/// Softmax probabilities over all entities plus the argmax per query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingOutput {
    pub probs: Tensor,
    pub predicted: Vec<usize>,
}

impl RankingOutput {
    pub fn from_logits(logits: &Tensor) -> Self {
        let probs = softmax_rows(logits);
        let predicted = (0..probs.rows())
            .map(|i| top_k(probs.row(i), 1).first().copied().unwrap_or(0))
            .collect();
        Self { probs, predicted }
    }
}

/// Indices of the `k` largest scores, ties broken by lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, n: usize, nr: usize, d: usize, td: usize) -> (Tensor, Tensor, Tensor, Decoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ent = Param::uniform(&[n, d], 1.0, &mut rng).value;
        let rel = Param::uniform(&[nr, d], 1.0, &mut rng).value;
        let text = Param::uniform(&[3, td], 1.0, &mut rng).value;
        let mut dec = Decoder::init(d, td, 4, 3, &mut rng);
        dec.kernel_bias = Param::uniform(&[4], 0.3, &mut rng);
        (ent, rel, text, dec)
    }

    #[test]
    fn single_entity_has_probability_one() {
        let (_, rel, _, dec) = setup(1, 1, 2, 4, 2);
        let ent = Tensor::from_rows(&[vec![0.3, -0.1, 0.2, 0.5]]).unwrap();
        let (logits, _) =
            decoder_forward(&ent, &rel, &Tensor::zeros(&[1, 2]), &[(0, 1)], &dec).unwrap();
        let out = RankingOutput::from_logits(&logits);
        assert_eq!(out.probs.data(), &[1.0]);
        assert_eq!(out.predicted, vec![0]);
    }

    #[test]
    fn matches_direct_convolution_oracle() {
        let (ent, rel, text, dec) = setup(2, 5, 2, 6, 3);
        let queries = [(0, 1), (3, 0), (4, 1)];
        let (logits, _) = decoder_forward(&ent, &rel, &text, &queries, &dec).unwrap();
        let d = 6;
        let kd = dec.kernels.value.data();
        for (i, &(s, r)) in queries.iter().enumerate() {
            let mut proj = vec![0.0; d];
            for j in 0..d {
                for t in 0..3 {
                    proj[j] += text.at(i, t) * dec.text_proj.value.at(t, j);
                }
            }
            let chans = [ent.row(s).to_vec(), rel.row(r).to_vec(), proj];
            let mut flat = Vec::new();
            for c in 0..4 {
                for j in 0..d as isize {
                    let mut acc = dec.kernel_bias.value.data()[c];
                    for (ch, sig) in chans.iter().enumerate() {
                        for u in 0..3isize {
                            let p = j + u - 1;
                            if p >= 0 && p < d as isize {
                                acc += kd[c * 9 + ch * 3 + u as usize] * sig[p as usize];
                            }
                        }
                    }
                    flat.push(acc.max(0.0));
                }
            }
            let mut q = dec.fc_b.value.data().to_vec();
            for (m, f) in flat.iter().enumerate() {
                for j in 0..d {
                    q[j] += f * dec.fc_w.value.at(m, j);
                }
            }
            for e in 0..5 {
                let want: f64 = (0..d).map(|j| q[j] * ent.at(e, j)).sum();
                assert!((logits.at(i, e) - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_text_removes_text_dependence() {
        let (ent, rel, _, mut dec) = setup(3, 4, 2, 5, 3);
        let zero = Tensor::zeros(&[1, 3]);
        let (a, _) = decoder_forward(&ent, &rel, &zero, &[(1, 0)], &dec).unwrap();
        dec.text_proj.value.scale(-7.0);
        let (b, _) = decoder_forward(&ent, &rel, &zero, &[(1, 0)], &dec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rows_sum_to_one() {
        let (ent, rel, text, dec) = setup(4, 6, 2, 4, 3);
        let (logits, _) = decoder_forward(&ent, &rel, &text, &[(0, 0), (1, 1), (5, 0)], &dec).unwrap();
        let out = RankingOutput::from_logits(&logits);
        for i in 0..3 {
            let s: f64 = out.probs.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
            assert!(out.probs.row(i).iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn top_k_rules() {
        assert_eq!(top_k(&[0.1, 0.7, 0.2], 2), vec![1, 2]);
        assert_eq!(top_k(&[0.25; 4], 4), vec![0, 1, 2, 3]);
        let mut all = top_k(&[0.3, 0.1, 0.5, 0.1], 4);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (ent, rel, text, dec) = setup(5, 5, 2, 6, 3);
        let queries = [(0, 1), (3, 0), (4, 1)];
        let targets = [2usize, 0, 4];
        let mut params = vec![Param::new(ent), Param::new(rel)];
        params.extend(dec.params().into_iter().cloned());
        let rebuild = |p: &[Param]| Decoder {
            text_proj: p[2].clone(),
            kernels: p[3].clone(),
            kernel_bias: p[4].clone(),
            fc_w: p[5].clone(),
            fc_b: p[6].clone(),
        };
        let loss = |p: &[Param]| {
            let (l, _) = decoder_forward(&p[0].value, &p[1].value, &text, &queries, &rebuild(p)).unwrap();
            crate::nn::cross_entropy_softmax(&l, &targets).unwrap().0
        };
        let mut d = rebuild(&params);
        let (logits, cache) =
            decoder_forward(&params[0].value, &params[1].value, &text, &queries, &d).unwrap();
        let (_, dl) = crate::nn::cross_entropy_softmax(&logits, &targets).unwrap();
        let mut dent = Tensor::zeros(params[0].shape());
        let mut drel = Tensor::zeros(params[1].shape());
        decoder_backward(&cache, &params[0].value, &mut d, &dl, &mut dent, &mut drel).unwrap();
        params[0].grad = dent;
        params[1].grad = drel;
        for (dst, src) in params[2..].iter_mut().zip(d.params()) {
            dst.grad = src.grad.clone();
        }
        let err = finite_diff_check(loss, &mut params, 1e-4);
        assert!(err <= 1e-4, "decoder err {err}");
    }
}
