use super::softmax::softmax_in_place;
use super::{NnError, Tensor};

pub const PROB_CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax cross-entropy averaged over the rows of `logits` (b×k).
///
/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy_softmax(
    logits: &Tensor,
    targets: &[usize],
) -> Result<(f64, Tensor), NnError> {
    let (b, k) = (logits.rows(), logits.cols());
    if targets.len() != b {
        return Err(NnError::Shape(format!(
            "{} targets for {} rows of logits",
            targets.len(),
            b
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(NnError::TargetOutOfRange {
            index: bad,
            classes: k,
        });
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = grad.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[t];
        softmax_in_place(row);
        row[t] -= 1.0;
    }
    let inv = 1.0 / b as f64;
    grad.scale(inv);
    Ok((loss * inv, grad))
}

/// Mean binary cross-entropy over all entries, with probabilities clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn binary_cross_entropy(probs: &[f64], labels: &[f64]) -> Result<f64, NnError> {
    if probs.len() != labels.len() {
        return Err(NnError::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_term(p, y))
        .sum();
    Ok(total / probs.len() as f64)
}

fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Binary cross-entropy on sigmoid outputs, summed over columns and averaged
/// over rows. Returns the loss and the gradient with respect to the logits.
pub fn bce_with_logits(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor), NnError> {
    if !logits.same_shape(labels) {
        return Err(NnError::Shape(format!(
            "logits {:?} vs labels {:?}",
            logits.shape(),
            labels.shape()
        )));
    }
    let b = logits.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for (k, (&z, &y)) in logits.data().iter().zip(labels.data()).enumerate() {
        let p = sigmoid(z);
        loss += bce_term(p, y);
        grad.data_mut()[k] = (p - y) / b;
    }
    Ok((loss / b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, Param};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let (loss, _) = cross_entropy_softmax(&Tensor::zeros(&[2, 7]), &[0, 6]).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_probabilities_are_near_zero() {
        let labels = [1.0, 0.0, 1.0, 0.0];
        let loss = binary_cross_entropy(&labels, &labels).unwrap();
        assert!(loss <= 1e-6 * 1e7f64.ln());
    }

    #[test]
    fn target_out_of_range() {
        let err = cross_entropy_softmax(&Tensor::zeros(&[1, 3]), &[3]).unwrap_err();
        assert!(matches!(err, NnError::TargetOutOfRange { index: 3, classes: 3 }));
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let logits = Param::uniform(&[4, 6], 3.0, &mut rng).value;
        let targets: Vec<usize> = (0..4).map(|_| rng.random_range(0..6)).collect();
        let (loss, _) = cross_entropy_softmax(&logits, &targets).unwrap();
        let mut oracle = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let z: f64 = (0..6).map(|j| logits.at(i, j).exp()).sum();
            oracle += -(logits.at(i, t).exp() / z).ln();
        }
        assert!((loss - oracle / 4.0).abs() <= 1e-9);

        let probs: Vec<f64> = (0..30).map(|_| rng.random_range(0.01..0.99)).collect();
        let labels: Vec<f64> = (0..30).map(|_| rng.random_range(0..2) as f64).collect();
        let mut oracle = 0.0;
        for i in 0..30 {
            oracle -= if labels[i] == 1.0 {
                probs[i].ln()
            } else {
                (1.0 - probs[i]).ln()
            };
        }
        let got = binary_cross_entropy(&probs, &labels).unwrap();
        assert!((got - oracle / 30.0).abs() <= 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut params = vec![Param::uniform(&[3, 5], 2.0, &mut rng)];
        let targets = [1, 4, 0];
        params[0].grad = cross_entropy_softmax(&params[0].value, &targets).unwrap().1;
        let err = finite_diff_check(
            |p| cross_entropy_softmax(&p[0].value, &targets).unwrap().0,
            &mut params,
            1e-4,
        );
        assert!(err <= 1e-4, "ce err {err}");

        let labels = Tensor::from_rows(&vec![vec![1.0, 0.0, 1.0, 1.0, 0.0]; 3]).unwrap();
        params[0].grad = bce_with_logits(&params[0].value, &labels).unwrap().1;
        let err = finite_diff_check(
            |p| bce_with_logits(&p[0].value, &labels).unwrap().0,
            &mut params,
            1e-4,
        );
        assert!(err <= 1e-4, "bce err {err}");
    }
}
