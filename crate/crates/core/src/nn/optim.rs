use super::Param;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One bias-corrected Adam step followed by decoupled weight decay
/// (`value −= lr · weight_decay · value`).
pub fn adam_step(p: &mut Param, cfg: &AdamConfig) {
    p.step_count += 1;
    let t = p.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let g = p.grad.data();
    let m = p.adam_m.data_mut();
    for (mi, &gi) in m.iter_mut().zip(g) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
    }
    let v = p.adam_v.data_mut();
    for (vi, &gi) in v.iter_mut().zip(g) {
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
    }
    let m = p.adam_m.data();
    let v = p.adam_v.data();
    let decay = cfg.lr * cfg.weight_decay;
    for (k, w) in p.value.data_mut().iter_mut().enumerate() {
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        *w -= decay * *w;
    }
}

/// Scale all gradients so their joint L2 norm is at most `threshold`.
/// Returns the scale that was applied (1.0 when no clipping happened).
pub fn clip_global_norm<'a, I>(params: I, threshold: f64) -> f64
where
    I: IntoIterator<Item = &'a mut Param>,
{
    let params: Vec<&mut Param> = params.into_iter().collect();
    let norm = params
        .iter()
        .map(|p| p.grad.sum_squares())
        .sum::<f64>()
        .sqrt();
    if norm <= threshold || norm == 0.0 {
        return 1.0;
    }
    let scale = threshold / norm;
    for p in params {
        p.grad.scale(scale);
    }
    scale
}
