use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{f1, ratio};

/// ROUGE-1, ROUGE-2 and ROUGE-L F1 scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
}

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn rouge(reference: &str, hypothesis: &str) -> RougeTriple {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    RougeTriple {
        r1: rouge_n(&r, &h, 1),
        r2: rouge_n(&r, &h, 2),
        rl: rouge_l(&r, &h),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn rouge_n(reference: &[String], hypothesis: &[String], n: usize) -> f64 {
    let ref_total = reference.len().saturating_sub(n - 1);
    if ref_total == 0 {
        return 0.0;
    }
    let hyp_total = hypothesis.len().saturating_sub(n - 1);
    let ref_counts = ngram_counts(reference, n);
    let hyp_counts = ngram_counts(hypothesis, n);
    let overlap: usize = hyp_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    let p = ratio(overlap as f64, hyp_total as f64);
    let r = ratio(overlap as f64, ref_total as f64);
    f1(p, r)
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l(reference: &[String], hypothesis: &[String]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(reference, hypothesis) as f64;
    f1(
        ratio(l, hypothesis.len() as f64),
        ratio(l, reference.len() as f64),
    )
}
