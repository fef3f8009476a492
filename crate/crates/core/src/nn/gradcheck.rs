use super::Param;

/// Compare the analytic gradients stored in `params[*].grad` against central
/// finite differences of `f`, one coordinate at a time.
///
/// Returns the maximum relative error, where the relative error of a
/// coordinate is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(mut f: F, params: &mut [Param], h: f64) -> f64
where
    F: FnMut(&[Param]) -> f64,
{
    let mut worst: f64 = 0.0;
    for pi in 0..params.len() {
        for k in 0..params[pi].value.len() {
            let orig = params[pi].value.data()[k];
            params[pi].value.data_mut()[k] = orig + h;
            let up = f(params);
            params[pi].value.data_mut()[k] = orig - h;
            let down = f(params);
            params[pi].value.data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * h);
            let analytic = params[pi].grad.data()[k];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn exact_quadratic() {
        let theta = Tensor::vector(vec![0.5, -1.5, 2.0, 3.25]);
        let mut p = Param::new(theta.clone());
        p.grad = theta.map(|v| 2.0 * v);
        let mut params = vec![p];
        let err = finite_diff_check(|p| p[0].value.sum_squares(), &mut params, 1e-4);
        assert!(err <= 1e-8, "err {err}");
        // values restored
        assert_eq!(params[0].value, theta);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut p = Param::new(Tensor::vector(vec![1.0, 2.0]));
        p.grad = Tensor::vector(vec![2.0, 0.0]);
        let mut params = vec![p];
        let err = finite_diff_check(|p| p[0].value.sum_squares(), &mut params, 1e-4);
        assert!(err > 0.5);
    }
}
