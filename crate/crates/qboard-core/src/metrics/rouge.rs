//! ROUGE-N (n-gram multiset overlap) and ROUGE-L (longest common
//! subsequence), plus the shared tokenizer.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// Precision / recall / F1 for one ROUGE variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeTriple {
    pub const ZERO: RougeTriple = RougeTriple {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeTriple {
            precision,
            recall,
            f1,
        }
    }
}

/// ROUGE-1, ROUGE-2, and ROUGE-L triples for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub rouge1: RougeTriple,
    pub rouge2: RougeTriple,
    pub rouge_l: RougeTriple,
}

/// N-gram overlap: clipped multiset intersection of the candidate's and
/// reference's n-grams. Sequences shorter than `n` yield zeros.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeTriple {
    assert!(n >= 1, "n-gram order must be at least 1");
    if candidate.len() < n || reference.len() < n {
        return RougeTriple::ZERO;
    }
    let mut reference_counts: HashMap<&[T], usize> = HashMap::new();
    for gram in reference.windows(n) {
        *reference_counts.entry(gram).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for gram in candidate.windows(n) {
        if let Some(count) = reference_counts.get_mut(gram) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    let candidate_total = candidate.len() - n + 1;
    let reference_total = reference.len() - n + 1;
    RougeTriple::from_pr(
        overlap as f64 / candidate_total as f64,
        overlap as f64 / reference_total as f64,
    )
}

/// Longest-common-subsequence overlap. Empty inputs yield zeros.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeTriple {
    if candidate.is_empty() || reference.is_empty() {
        return RougeTriple::ZERO;
    }
    let lcs = lcs_length(candidate, reference) as f64;
    RougeTriple::from_pr(lcs / candidate.len() as f64, lcs / reference.len() as f64)
}

/// All three variants at once.
pub fn rouge_score<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore {
        rouge1: rouge_n(candidate, reference, 1),
        rouge2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
    }
}

// Two-row dynamic program; O(len(a) * len(b)) time, O(len(b)) space.
pub(crate) fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Lowercase, map every non-alphanumeric character (Unicode classes) to a
/// space, and split on whitespace.
pub fn tokenize_for_rouge(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
