use std::collections::BTreeMap;

use super::MetricsError;

pub const DEFAULT_KS: [usize; 3] = [1, 3, 10];

/// A ranked candidate list (best first) with the index of the correct answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedQuery {
    pub true_index: usize,
    pub ranking: Vec<usize>,
}

impl RankedQuery {
    pub fn new(true_index: usize, ranking: Vec<usize>) -> Result<Self, MetricsError> {
        if ranking.iter().filter(|&&c| c == true_index).count() != 1 {
            return Err(MetricsError::BadRanking(true_index));
        }
        Ok(Self {
            true_index,
            ranking,
        })
    }

    /// 1-based rank of the true answer.
    pub fn rank(&self) -> usize {
        self.ranking
            .iter()
            .position(|&c| c == self.true_index)
            .map_or(usize::MAX, |p| p + 1)
    }
}

/// 1-based rank of `target` under descending `scores`, ties broken by lower index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

/// Fraction of queries whose correct answer ranks within the top `k`, per `k`.
pub fn hits_at_k(
    queries: &[RankedQuery],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>, MetricsError> {
    if queries.is_empty() {
        return Err(MetricsError::Empty);
    }
    let ranks: Vec<usize> = queries.iter().map(RankedQuery::rank).collect();
    let n = ranks.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect())
}
