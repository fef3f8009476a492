use super::{NnError, Tensor};

/// `x·W + b` with `b` broadcast over rows. `x` is n×p, `W` is p×q, `b` has q entries.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    if b.len() != w.cols() {
        return Err(NnError::Shape(format!(
            "bias of length {} for {} output columns",
            b.len(),
            w.cols()
        )));
    }
    let mut y = x.matmul(w)?;
    let bias = b.data();
    for i in 0..y.rows() {
        for (v, bb) in y.row_mut(i).iter_mut().zip(bias) {
            *v += bb;
        }
    }
    Ok(y)
}

/// Gradients of [`linear`] given the upstream gradient `dy` (n×q).
///
/// Returns `(dx, dW, db)`.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let dx = dy.matmul_t(w)?;
    let dw = x.t_matmul(dy)?;
    let db = Tensor::vector(dy.sum_rows());
    Ok((dx, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::finite_diff_check;
    use crate::nn::Param;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weight_is_passthrough() {
        let x = Tensor::from_rows(&[vec![0.3, -1.2], vec![2.0, 5.0]]).unwrap();
        let y = linear(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, x.reshape(&[2, 2]).unwrap());
    }

    #[test]
    fn hand_arithmetic() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(linear(&x, &w, &b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn bias_mismatch_is_an_error() {
        let x = Tensor::zeros(&[1, 2]);
        assert!(linear(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = vec![
            Param::uniform(&[3, 4], 1.0, &mut rng),
            Param::uniform(&[4, 5], 1.0, &mut rng),
            Param::uniform(&[5], 1.0, &mut rng),
        ];
        let probe = Param::uniform(&[3, 5], 1.0, &mut rng).value;
        // loss = Σ probe ⊙ linear(x, W, b)
        let loss = |p: &[Param]| -> f64 {
            let y = linear(&p[0].value, &p[1].value, &p[2].value).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let (dx, dw, db) = linear_backward(&params[0].value, &params[1].value, &probe).unwrap();
        params[0].grad = dx;
        params[1].grad = dw;
        params[2].grad = db;
        let err = finite_diff_check(loss, &mut params, 1e-4);
        assert!(err <= 1e-4, "max rel err {err}");
    }
}
