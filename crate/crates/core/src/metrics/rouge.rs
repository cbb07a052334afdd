use std::collections::HashMap;

use super::{MetricConfig, Prf, TokenSeq};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N against one or more references.
///
/// Recall divides the clipped matches summed over references by the total
/// reference n-gram count. Precision divides the same matches by the
/// candidate n-gram count times the number of references. F is the plain
/// harmonic mean.
///
/// # Panics
///
/// If `n` is 0.
pub fn rouge_n(candidate: &TokenSeq, references: &[TokenSeq], n: usize) -> Prf {
    assert!(n > 0, "n-gram order must be positive");
    let cand_counts = ngram_counts(candidate.tokens(), n);
    let cand_total = candidate.len().saturating_sub(n - 1);
    let mut matches = 0usize;
    let mut ref_total = 0usize;
    for reference in references {
        ref_total += reference.len().saturating_sub(n - 1);
        for (gram, ref_count) in ngram_counts(reference.tokens(), n) {
            if let Some(&c) = cand_counts.get(gram) {
                matches += c.min(ref_count);
            }
        }
    }
    Prf::from_counts(
        matches as f64,
        (cand_total * references.len()) as f64,
        ref_total as f64,
        1.0,
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: LCS-based recall and precision with the F-measure weighted by
/// `config.beta`.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq, config: &MetricConfig) -> Prf {
    let lcs = lcs_len(candidate.tokens(), reference.tokens());
    Prf::from_counts(
        lcs as f64,
        candidate.len() as f64,
        reference.len() as f64,
        config.beta,
    )
}
