use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Largest number of nonzero differences handled by exact enumeration.
pub const MAX_EXACT_PAIRS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// Alternative: the first sample is larger (`P(W ≥ W⁺)`).
    One,
    Two,
}

/// Doubled midranks of `|d|` so that tied ranks stay integral.
fn doubled_midranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank ((i+1)+(j+1))/2; doubled: i+j+2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Exact Wilcoxon signed-rank p-value for paired differences.
///
/// Zero differences are dropped, the remaining `|d|` are ranked with midranks
/// for ties, and the null distribution of `W⁺` is obtained by enumerating all
/// `2^m` sign assignments.
pub fn wilcoxon_signed_rank(diffs: &[f64], sidedness: Sidedness) -> Result<f64, MetricsError> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let m = nonzero.len();
    if m == 0 {
        return Err(MetricsError::AllZero);
    }
    if m > MAX_EXACT_PAIRS {
        return Err(MetricsError::TooManyPairs(m));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let observed: u64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let total = 1u64 << m;
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0..total {
        let mut w = 0u64;
        let mut bits = mask;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            w += ranks[k];
            bits &= bits - 1;
        }
        if w >= observed {
            ge += 1;
        }
        if w <= observed {
            le += 1;
        }
    }
    let upper = ge as f64 / total as f64;
    let lower = le as f64 / total as f64;
    Ok(match sidedness {
        Sidedness::One => upper,
        Sidedness::Two => (2.0 * upper.min(lower)).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_positive_differences() {
        let d: Vec<f64> = (1..=15).map(|i| i as f64 * 0.01).collect();
        let one = wilcoxon_signed_rank(&d, Sidedness::One).unwrap();
        let two = wilcoxon_signed_rank(&d, Sidedness::Two).unwrap();
        assert_eq!(one, 2f64.powi(-15));
        assert_eq!(two, 2f64.powi(-14));
    }

    #[test]
    fn two_positive_differences() {
        assert_eq!(wilcoxon_signed_rank(&[1.0, 2.0], Sidedness::One).unwrap(), 0.25);
    }

    #[test]
    fn zeros_are_dropped() {
        let a = wilcoxon_signed_rank(&[0.0, 1.0, -2.0, 0.0, 3.0], Sidedness::Two).unwrap();
        let b = wilcoxon_signed_rank(&[1.0, -2.0, 3.0], Sidedness::Two).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert_eq!(
            wilcoxon_signed_rank(&[0.0, 0.0], Sidedness::One),
            Err(MetricsError::AllZero)
        );
        let many = vec![1.0; 21];
        assert_eq!(
            wilcoxon_signed_rank(&many, Sidedness::One),
            Err(MetricsError::TooManyPairs(21))
        );
    }

    #[test]
    fn midranks() {
        assert_eq!(doubled_midranks(&[3.0, 1.0, 3.0, 2.0]), vec![7, 2, 7, 4]);
    }

    #[test]
    fn two_sided_is_capped() {
        // symmetric observation: both tails exceed one half
        let p = wilcoxon_signed_rank(&[1.0, -1.0], Sidedness::Two).unwrap();
        assert_eq!(p, 1.0);
    }
}
