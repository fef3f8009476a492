use super::Tensor;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward of [`softmax_rows`] from its output `y` and upstream `dy`:
/// `dx_ij = y_ij (dy_ij − Σ_k dy_ik y_ik)`.
pub fn softmax_rows_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(y.shape());
    for i in 0..y.rows() {
        let yr = y.row(i);
        let dyr = dy.row(i);
        let dot: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for (j, d) in dx.row_mut(i).iter_mut().enumerate() {
            *d = yr[j] * (dyr[j] - dot);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, Param};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_values_are_uniform() {
        let y = softmax_rows(&Tensor::filled(&[1, 4], 2.5));
        for v in y.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_two_entries() {
        let y = softmax_rows(&Tensor::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap());
        assert!((y.data()[0] - 0.25).abs() < 1e-12);
        assert!((y.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn large_inputs_do_not_overflow() {
        let y = softmax_rows(&Tensor::from_rows(&[vec![1000.0, 1000.0]]).unwrap());
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = vec![Param::uniform(&[3, 5], 2.0, &mut rng)];
        let probe = Param::uniform(&[3, 5], 1.0, &mut rng).value;
        let y = softmax_rows(&params[0].value);
        params[0].grad = softmax_rows_backward(&y, &probe);
        let err = finite_diff_check(
            |p| {
                let y = softmax_rows(&p[0].value);
                y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
            },
            &mut params,
            1e-4,
        );
        assert!(err <= 1e-4, "err {err}");
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(row in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let y = softmax_rows(&Tensor::from_rows(&[row]).unwrap());
            let s: f64 = y.data().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn shift_invariance(row in prop::collection::vec(-20.0f64..20.0, 1..10), c in -30.0f64..30.0) {
            let a = softmax_rows(&Tensor::from_rows(&[row.clone()]).unwrap());
            let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
            let b = softmax_rows(&Tensor::from_rows(&[shifted]).unwrap());
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
