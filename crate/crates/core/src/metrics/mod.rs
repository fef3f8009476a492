//! Evaluation metrics: Hits@k, ROUGE-1/2/L, micro multilabel PRF, perplexity
//! and the exact Wilcoxon signed-rank test.

mod prf;
mod ranking;
pub mod report;
mod rouge;
mod wilcoxon;

pub use prf::{multilabel_prf, Prf};
pub use ranking::{hits_at_k, rank_of, RankedQuery, DEFAULT_KS};
pub use report::{Report, ReportRow};
pub use rouge::{rouge, tokenize, RougeTriple};
pub use wilcoxon::{wilcoxon_signed_rank, Sidedness, MAX_EXACT_PAIRS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no queries to score")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-binary entry {value} at ({row}, {col})")]
    NonBinary { row: usize, col: usize, value: u8 },
    #[error("probability {0} is not in (0, 1]")]
    BadProbability(f64),
    #[error("all paired differences are zero")]
    AllZero,
    #[error("{0} nonzero differences exceed the exact enumeration limit of {MAX_EXACT_PAIRS}")]
    TooManyPairs(usize),
    #[error("ranking does not contain the true index {0} exactly once")]
    BadRanking(usize),
}

/// `exp(mean(−ln p))` over per-token probabilities.
pub fn perplexity(token_probs: &[f64]) -> Result<f64, MetricsError> {
    if token_probs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut nll = 0.0;
    for &p in token_probs {
        if !(p > 0.0 && p <= 1.0) {
            return Err(MetricsError::BadProbability(p));
        }
        nll -= p.ln();
    }
    Ok((nll / token_probs.len() as f64).exp())
}

/// F1 from precision and recall with the 0/0 → 0 convention.
pub(crate) fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_closed_forms() {
        assert_eq!(perplexity(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        let v = 37.0;
        assert!((perplexity(&[1.0 / v; 9]).unwrap() - v).abs() < 1e-9);
        assert!((perplexity(&[0.5, 0.125]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_errors() {
        assert_eq!(perplexity(&[]), Err(MetricsError::Empty));
        assert_eq!(
            perplexity(&[0.5, 0.0]),
            Err(MetricsError::BadProbability(0.0))
        );
        assert!(perplexity(&[1.5]).is_err());
    }
}
