//! Evaluation metrics: classification scoring, ROUGE-1/2/L, embedding cosine
//! similarity, and perplexity from token log-probabilities. Everything here
//! is a pure function over plain data.

mod classification;
pub mod render;
mod rouge;

pub use classification::{score_classification, ClassScores, ClassificationReport, ConfusionMatrix};
pub use rouge::{rouge_l, rouge_n, rouge_score, tokenize_for_rouge, RougeScore, RougeTriple};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::EmbeddingVector;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("embedding dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("log-probability at index {index} is positive ({value})")]
    PositiveLogprob { index: usize, value: f64 },
}

/// Cosine of the angle between two embeddings, clamped to [-1, 1] so floating
/// point overshoot can never escape the valid range.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    if a.dim() == 0 {
        return Err(MetricsError::EmptyInput("embedding"));
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// exp(-mean(logprobs)), with natural-log probabilities. Logprobs must be
/// <= 0, so the result is always >= 1.
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64, MetricsError> {
    if token_logprobs.is_empty() {
        return Err(MetricsError::EmptyInput("token logprobs"));
    }
    for (index, &value) in token_logprobs.iter().enumerate() {
        if value > 0.0 {
            return Err(MetricsError::PositiveLogprob { index, value });
        }
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

/// The per-question similarity triple evaluated between a model answer and
/// the instructor answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cosine: f64,
    pub rouge: RougeScore,
    pub perplexity: f64,
}

/// Unweighted means of a set of similarity reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAggregate {
    pub count: usize,
    pub cosine: f64,
    pub rouge: RougeScore,
    pub perplexity: f64,
}

/// Arithmetic mean over every field; `None` for an empty slice.
pub fn aggregate_similarity(reports: &[SimilarityReport]) -> Option<SimilarityAggregate> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&SimilarityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let triple = |get: &dyn Fn(&RougeScore) -> &RougeTriple| RougeTriple {
        precision: mean(&|r| get(&r.rouge).precision),
        recall: mean(&|r| get(&r.rouge).recall),
        f1: mean(&|r| get(&r.rouge).f1),
    };
    Some(SimilarityAggregate {
        count: reports.len(),
        cosine: mean(&|r| r.cosine),
        rouge: RougeScore {
            rouge1: triple(&|s| &s.rouge1),
            rouge2: triple(&|s| &s.rouge2),
            rouge_l: triple(&|s| &s.rouge_l),
        },
        perplexity: mean(&|r| r.perplexity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec2(x: f64, y: f64) -> EmbeddingVector {
        EmbeddingVector {
            values: vec![x, y],
        }
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let v = EmbeddingVector {
            values: vec![1.0, 2.0, 3.0],
        };
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        let c = cosine_similarity(&vec2(1.0, 0.0), &vec2(0.0, 1.0)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn cosine_of_antipodal_vectors_is_minus_one() {
        let c = cosine_similarity(&vec2(1.0, 0.0), &vec2(-1.0, 0.0)).unwrap();
        assert_eq!(c, -1.0);
    }

    #[test]
    fn cosine_rejects_dim_mismatch_and_zero_norm() {
        let a = vec2(1.0, 0.0);
        let b = EmbeddingVector {
            values: vec![1.0, 0.0, 0.0],
        };
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(MetricsError::DimensionMismatch { a: 2, b: 3 })
        ));
        assert!(matches!(
            cosine_similarity(&a, &vec2(0.0, 0.0)),
            Err(MetricsError::ZeroNorm)
        ));
    }

    #[test]
    fn perplexity_of_half_probability_tokens_is_two() {
        let lp = (0.5f64).ln();
        let p = perplexity(&[lp, lp, lp]).unwrap();
        assert!((p - 2.0).abs() < 1e-9);
    }

    #[test]
    fn perplexity_of_certain_tokens_is_one() {
        assert!((perplexity(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_matches_direct_evaluation() {
        // mean of [-1, -3] is -2, so the result is e^2
        let p = perplexity(&[-1.0, -3.0]).unwrap();
        assert!((p - 7.389_056_098_930_65).abs() < 1e-9);
    }

    #[test]
    fn perplexity_rejects_empty_and_positive() {
        assert!(perplexity(&[]).is_err());
        assert!(matches!(
            perplexity(&[-0.5, 0.1]),
            Err(MetricsError::PositiveLogprob { index: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn cosine_never_leaves_unit_interval(
            values in prop::collection::vec(-1e6f64..1e6, 1..16),
            scale in 0.5f64..2.0,
        ) {
            let a = EmbeddingVector { values: values.clone() };
            let b = EmbeddingVector { values: values.iter().map(|v| v * scale).collect() };
            if let Ok(c) = cosine_similarity(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }

        #[test]
        fn perplexity_is_permutation_invariant_and_monotone(
            mut logprobs in prop::collection::vec(-8.0f64..0.0, 1..12),
            bump_index in any::<prop::sample::Index>(),
        ) {
            let base = perplexity(&logprobs).unwrap();
            let mut reversed = logprobs.clone();
            reversed.reverse();
            prop_assert!((perplexity(&reversed).unwrap() - base).abs() < 1e-12);

            // raising one logprob toward zero strictly lowers perplexity
            let i = bump_index.index(logprobs.len());
            if logprobs[i] < -1e-6 {
                logprobs[i] /= 2.0;
                prop_assert!(perplexity(&logprobs).unwrap() < base);
            }
        }
    }
}
