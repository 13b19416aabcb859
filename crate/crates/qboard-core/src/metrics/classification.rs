//! Confusion matrix and per-class precision / recall / F-score for the
//! four-way question taxonomy.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::QuestionType;

/// 4x4 count matrix indexed `[true type][predicted type]`, in the fixed
/// label order (conceptual, homework, logistics, not answerable).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(QuestionType, QuestionType)]) -> Self {
        let mut m = Self::new();
        for &(truth, predicted) in pairs {
            m.record(truth, predicted);
        }
        m
    }

    pub fn record(&mut self, truth: QuestionType, predicted: QuestionType) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn count(&self, truth: QuestionType, predicted: QuestionType) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal_total(&self) -> u64 {
        QuestionType::ALL.iter().map(|&t| self.count(t, t)).sum()
    }

    /// Number of questions whose true label is `t`.
    pub fn support(&self, t: QuestionType) -> u64 {
        self.counts[t.index()].iter().sum()
    }

    /// Number of questions predicted as `t`.
    pub fn predicted_total(&self, t: QuestionType) -> u64 {
        self.counts.iter().map(|row| row[t.index()]).sum()
    }
}

/// Per-class counts and scores in the fixed label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: QuestionType,
    pub count: u64,
    pub correct: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassScores>,
    /// Micro accuracy: diagonal total over grand total.
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_score: f64,
    pub total: u64,
}

impl ClassificationReport {
    pub fn from_matrix(matrix: &ConfusionMatrix) -> Self {
        let mut per_class = Vec::with_capacity(4);
        for t in QuestionType::ALL {
            let tp = matrix.count(t, t);
            let count = matrix.support(t);
            let predicted = matrix.predicted_total(t);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, count);
            let f_score = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_class.push(ClassScores {
                class: t,
                count,
                correct: tp,
                precision,
                recall,
                f_score,
            });
        }
        let total = matrix.total();
        let accuracy = ratio(matrix.diagonal_total(), total);
        let macro_of = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / 4.0;
        ClassificationReport {
            accuracy,
            macro_precision: macro_of(|c| c.precision),
            macro_recall: macro_of(|c| c.recall),
            macro_f_score: macro_of(|c| c.f_score),
            total,
            per_class,
        }
    }

    pub fn class(&self, t: QuestionType) -> &ClassScores {
        &self.per_class[t.index()]
    }
}

fn ratio(numerator: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Score a set of (true, predicted) pairs.
pub fn score_classification(
    pairs: &[(QuestionType, QuestionType)],
) -> Result<(ClassificationReport, ConfusionMatrix), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput("classification pairs"));
    }
    let matrix = ConfusionMatrix::from_pairs(pairs);
    Ok((ClassificationReport::from_matrix(&matrix), matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use QuestionType::*;

    #[test]
    fn perfect_predictions_score_one() {
        let pairs: Vec<_> = QuestionType::ALL.iter().map(|&t| (t, t)).collect();
        let (report, matrix) = score_classification(&pairs).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(matrix.diagonal_total(), 4);
        for c in &report.per_class {
            assert_eq!(c.precision, 1.0);
            assert_eq!(c.recall, 1.0);
            assert_eq!(c.f_score, 1.0);
        }
    }

    #[test]
    fn recall_matches_correct_over_count() {
        // 13 conceptual questions, 11 predicted correctly, 2 as homework
        let mut pairs = vec![(Conceptual, Conceptual); 11];
        pairs.extend(vec![(Conceptual, Homework); 2]);
        pairs.push((Homework, Homework));
        let (report, _) = score_classification(&pairs).unwrap();
        let conceptual = report.class(Conceptual);
        assert_eq!(conceptual.count, 13);
        assert_eq!(conceptual.correct, 11);
        assert!((conceptual.recall - 11.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(score_classification(&[]).is_err());
    }

    // The harmonic mean of already-rounded P=0.79, R=0.85 rounds to 0.82,
    // not the 0.81 printed alongside them in the reference table. F-scores
    // here are always computed from unrounded counts, never from rounded
    // precision/recall.
    #[test]
    fn f_from_rounded_pr_is_0_82_documenting_the_rounding_tension() {
        let f: f64 = 2.0 * 0.79 * 0.85 / (0.79 + 0.85);
        assert!((f - 0.8189).abs() < 1e-4);
        assert_eq!(crate::metrics::render::round2(f), 0.82);
    }

    #[test]
    fn zero_support_class_scores_zero() {
        let (report, _) = score_classification(&[(Homework, Homework)]).unwrap();
        let logistics = report.class(Logistics);
        assert_eq!(logistics.count, 0);
        assert_eq!(logistics.precision, 0.0);
        assert_eq!(logistics.recall, 0.0);
        assert_eq!(logistics.f_score, 0.0);
    }

    fn arb_type() -> impl Strategy<Value = QuestionType> {
        prop::sample::select(QuestionType::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn recall_times_count_sums_to_diagonal(
            pairs in prop::collection::vec((arb_type(), arb_type()), 1..60)
        ) {
            let (report, matrix) = score_classification(&pairs).unwrap();
            let weighted: f64 = report
                .per_class
                .iter()
                .map(|c| c.recall * c.count as f64)
                .sum();
            prop_assert!((weighted - matrix.diagonal_total() as f64).abs() < 1e-9);
            prop_assert_eq!(matrix.total() as usize, pairs.len());
        }

        #[test]
        fn accuracy_is_permutation_invariant(
            pairs in prop::collection::vec((arb_type(), arb_type()), 1..40)
        ) {
            let (report, _) = score_classification(&pairs).unwrap();
            let mut reversed = pairs.clone();
            reversed.reverse();
            let (report_rev, _) = score_classification(&reversed).unwrap();
            prop_assert_eq!(report.accuracy, report_rev.accuracy);
            prop_assert_eq!(report, report_rev);
        }
    }
}
