use serde::{Deserialize, Serialize};

use super::{f1, ratio, MetricsError};

/// Micro-averaged F1, recall and precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Micro-averaged precision/recall/F1 over a days × labels binary matrix.
pub fn multilabel_prf(y_true: &[Vec<u8>], y_pred: &[Vec<u8>]) -> Result<Prf, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Shape(format!(
            "{} true rows vs {} predicted rows",
            y_true.len(),
            y_pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (i, (t, p)) in y_true.iter().zip(y_pred).enumerate() {
        if t.len() != p.len() {
            return Err(MetricsError::Shape(format!(
                "row {i}: {} true labels vs {} predicted",
                t.len(),
                p.len()
            )));
        }
        for (j, (&a, &b)) in t.iter().zip(p).enumerate() {
            for value in [a, b] {
                if value > 1 {
                    return Err(MetricsError::NonBinary { row: i, col: j, value });
                }
            }
            match (a, b) {
                (1, 1) => tp += 1,
                (0, 1) => fp += 1,
                (1, 0) => fn_ += 1,
                _ => {}
            }
        }
    }
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    Ok(Prf {
        f1: f1(precision, recall),
        recall,
        precision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = vec![vec![1, 0, 1], vec![0, 1, 0]];
        assert_eq!(
            multilabel_prf(&y, &y).unwrap(),
            Prf { f1: 1.0, recall: 1.0, precision: 1.0 }
        );
    }

    #[test]
    fn count_arithmetic() {
        let t = vec![vec![1, 0, 1], vec![0, 1, 0]];
        let p = vec![vec![1, 1, 1], vec![0, 0, 0]];
        let prf = multilabel_prf(&t, &p).unwrap();
        for v in [prf.f1, prf.recall, prf.precision] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_predictions() {
        let t = vec![vec![1, 0], vec![0, 1]];
        let p = vec![vec![0, 0], vec![0, 0]];
        assert_eq!(multilabel_prf(&t, &p).unwrap(), Prf::default());
    }

    #[test]
    fn errors() {
        assert!(multilabel_prf(&[vec![1]], &[]).is_err());
        assert!(multilabel_prf(&[vec![1, 0]], &[vec![1]]).is_err());
        assert_eq!(
            multilabel_prf(&[vec![2]], &[vec![1]]),
            Err(MetricsError::NonBinary { row: 0, col: 0, value: 2 })
        );
    }
}
