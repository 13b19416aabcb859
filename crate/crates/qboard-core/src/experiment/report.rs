//! Experiment reports: per-cell results with the per-question rows they were
//! aggregated from, provenance, and JSON/CSV/text emission. Published
//! reference values ship in `assets/reference_tables.json` and annotate any
//! cell whose axis value they cover.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::QuestionType;
use crate::metrics::render::{aligned, percent, round2};
use crate::metrics::{ClassificationReport, SimilarityAggregate, SimilarityReport};
use crate::prompt::TaskDescriptionVariant;

use super::{ExperimentAxis, ExperimentError, ExperimentSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Backend identity string, e.g. `replay:fixtures/x.jsonl`.
    pub backend: String,
    pub backend_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_sha256: Option<String>,
    pub timestamp_unix: u64,
    /// The question set every cell ran over (paired design).
    pub question_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub question_id: String,
    pub truth: QuestionType,
    /// None when the completion did not parse as a label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<QuestionType>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub question_id: String,
    pub model_answer: String,
    pub similarity: SimilarityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuestion {
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellValue {
    Accuracy {
        questions: usize,
        correct: usize,
        /// correct / questions; unparseable completions count as wrong.
        accuracy: f64,
        /// Scores over the parsed predictions only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<ClassificationReport>,
        rows: Vec<PredictionRow>,
    },
    Similarity {
        aggregate: SimilarityAggregate,
        rows: Vec<SimilarityRow>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        skipped: Vec<SkippedQuestion>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSimilarity {
    pub count: usize,
    pub cosine: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub perplexity: f64,
}

/// A published value the cell can be eyeballed against. Not a test target:
/// these numbers came from a live model run that is not reproducible offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceValue {
    Accuracy(f64),
    Similarity(ReferenceSimilarity),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceValue>,
    #[serde(flatten)]
    pub value: CellValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub cells: Vec<Cell>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("reports serialize");
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        match self.cells.first().map(|c| &c.value) {
            Some(CellValue::Similarity { .. }) => self.similarity_csv(),
            _ => self.accuracy_csv(),
        }
    }

    fn accuracy_csv(&self) -> String {
        let mut out = String::from("cell,questions,correct,accuracy,reference_accuracy,error\n");
        for cell in &self.cells {
            let reference = match cell.reference {
                Some(ReferenceValue::Accuracy(a)) => format!("{a:.2}"),
                _ => String::new(),
            };
            match &cell.value {
                CellValue::Accuracy {
                    questions,
                    correct,
                    accuracy,
                    ..
                } => out.push_str(&format!(
                    "{},{},{},{:.6},{},\n",
                    cell.label, questions, correct, accuracy, reference
                )),
                CellValue::Failed { error } => out.push_str(&format!(
                    "{},,,,{},{}\n",
                    cell.label,
                    reference,
                    error.replace([',', '\n'], " ")
                )),
                CellValue::Similarity { .. } => {}
            }
        }
        out
    }

    fn similarity_csv(&self) -> String {
        let mut out = String::from(
            "cell,count,cosine,rouge1_f1,rouge2_f1,rouge_l_f1,perplexity,\
             ref_cosine,ref_rouge1,ref_rouge2,ref_rouge_l,ref_perplexity,error\n",
        );
        for cell in &self.cells {
            let reference = match &cell.reference {
                Some(ReferenceValue::Similarity(r)) => format!(
                    "{:.2},{:.2},{:.2},{:.2},{:.2}",
                    r.cosine, r.rouge1, r.rouge2, r.rouge_l, r.perplexity
                ),
                _ => ",,,,".to_string(),
            };
            match &cell.value {
                CellValue::Similarity { aggregate, .. } => out.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},\n",
                    cell.label,
                    aggregate.count,
                    aggregate.cosine,
                    aggregate.rouge.rouge1.f1,
                    aggregate.rouge.rouge2.f1,
                    aggregate.rouge.rouge_l.f1,
                    aggregate.perplexity,
                    reference
                )),
                CellValue::Failed { error } => out.push_str(&format!(
                    "{},,,,,,,{},{}\n",
                    cell.label,
                    reference,
                    error.replace([',', '\n'], " ")
                )),
                CellValue::Accuracy { .. } => {}
            }
        }
        out
    }

    /// Rendered tables in the shape of the published ones: a wide
    /// examples/accuracy table for the few-shot sweep, label/accuracy rows
    /// for ablations, and type/count/cosine/ROUGE/perplexity rows for the
    /// similarity experiments.
    pub fn render_text(&self) -> String {
        let mut out = format!("Experiment: {}\n", self.spec.name);
        match &self.spec.axis {
            ExperimentAxis::FewShotSweep { .. } => {
                let mut header = vec!["Examples".to_string()];
                let mut accuracy = vec!["Accuracy".to_string()];
                let mut reference = vec!["Reference".to_string()];
                let mut any_reference = false;
                for cell in &self.cells {
                    header.push(cell.label.clone());
                    accuracy.push(match &cell.value {
                        CellValue::Accuracy { accuracy, .. } => percent(*accuracy),
                        CellValue::Failed { .. } => "failed".to_string(),
                        CellValue::Similarity { .. } => String::new(),
                    });
                    reference.push(match cell.reference {
                        Some(ReferenceValue::Accuracy(a)) => {
                            any_reference = true;
                            percent(a)
                        }
                        _ => "-".to_string(),
                    });
                }
                let mut rows = vec![header, accuracy];
                if any_reference {
                    rows.push(reference);
                }
                out.push('\n');
                out.push_str(&aligned(&rows));
            }
            ExperimentAxis::DescriptionVariants { .. } | ExperimentAxis::LabelSchemes { .. } => {
                let label_header = if self.spec.axis.kind() == "label_schemes" {
                    "Scheme"
                } else {
                    "Variant"
                };
                let mut rows = vec![vec![
                    label_header.to_string(),
                    "Accuracy".to_string(),
                    "Reference".to_string(),
                ]];
                for cell in &self.cells {
                    rows.push(vec![
                        cell.label.clone(),
                        match &cell.value {
                            CellValue::Accuracy { accuracy, .. } => percent(*accuracy),
                            CellValue::Failed { .. } => "failed".to_string(),
                            CellValue::Similarity { .. } => String::new(),
                        },
                        match cell.reference {
                            Some(ReferenceValue::Accuracy(a)) => percent(a),
                            _ => "-".to_string(),
                        },
                    ]);
                }
                out.push('\n');
                out.push_str(&aligned(&rows));
            }
            ExperimentAxis::AnswerEval { .. } | ExperimentAxis::FeedbackSplit => {
                let label_header = if self.spec.axis.kind() == "feedback_split" {
                    "Feedback"
                } else {
                    "Question Type"
                };
                let mut rows = vec![vec![
                    label_header.to_string(),
                    "Count".to_string(),
                    "Cosine Similarity".to_string(),
                    "ROUGE1/2/L".to_string(),
                    "Perplexity".to_string(),
                ]];
                let mut failures = Vec::new();
                let mut references = Vec::new();
                for cell in &self.cells {
                    match &cell.value {
                        CellValue::Similarity { aggregate, .. } => {
                            rows.push(vec![
                                cell.label.clone(),
                                aggregate.count.to_string(),
                                fmt2(aggregate.cosine),
                                format!(
                                    "{}/{}/{}",
                                    fmt2(aggregate.rouge.rouge1.f1),
                                    fmt2(aggregate.rouge.rouge2.f1),
                                    fmt2(aggregate.rouge.rouge_l.f1)
                                ),
                                fmt2(aggregate.perplexity),
                            ]);
                        }
                        CellValue::Failed { error } => {
                            failures.push(format!("cell {} failed: {error}", cell.label));
                        }
                        CellValue::Accuracy { .. } => {}
                    }
                    if let Some(ReferenceValue::Similarity(r)) = &cell.reference {
                        references.push(vec![
                            cell.label.clone(),
                            r.count.to_string(),
                            fmt2(r.cosine),
                            format!("{}/{}/{}", fmt2(r.rouge1), fmt2(r.rouge2), fmt2(r.rouge_l)),
                            fmt2(r.perplexity),
                        ]);
                    }
                }
                out.push('\n');
                out.push_str(&aligned(&rows));
                for failure in failures {
                    out.push_str(&failure);
                    out.push('\n');
                }
                if !references.is_empty() {
                    out.push_str("\nReference values:\n");
                    let mut table = vec![rows[0].clone()];
                    table.extend(references);
                    out.push_str(&aligned(&table));
                }
            }
        }
        out
    }

    /// Write `report.json`, `report.csv` and `report.txt` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), ExperimentError> {
        let dir = dir.as_ref();
        let io_err = |source| ExperimentError::Io {
            path: dir.display().to_string(),
            source,
        };
        fs::create_dir_all(dir).map_err(io_err)?;
        fs::write(dir.join("report.json"), self.to_json()).map_err(io_err)?;
        fs::write(dir.join("report.csv"), self.to_csv()).map_err(io_err)?;
        fs::write(dir.join("report.txt"), self.render_text()).map_err(io_err)?;
        Ok(())
    }
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

/// Published reference numbers for annotation. Shipped as a data asset; not
/// asserted against, since they depend on a retired live model.
#[derive(Debug, Clone, Deserialize)]
pub struct ReferenceTables {
    pub classification_by_type: BTreeMap<String, ReferenceClassRow>,
    pub classification_accuracy: f64,
    pub fewshot_accuracy: BTreeMap<String, f64>,
    pub description_accuracy: BTreeMap<String, f64>,
    pub scheme_accuracy: BTreeMap<String, f64>,
    pub answer_similarity_by_type: BTreeMap<String, ReferenceSimilarity>,
    pub feedback_similarity: BTreeMap<String, ReferenceSimilarity>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ReferenceClassRow {
    pub count: u64,
    pub correct: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

const REFERENCE_TABLES_JSON: &str = include_str!("../../../../assets/reference_tables.json");

pub fn reference_tables() -> &'static ReferenceTables {
    static TABLES: OnceLock<ReferenceTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        serde_json::from_str(REFERENCE_TABLES_JSON).expect("bundled reference tables parse")
    })
}

pub(super) fn reference_for_fewshot(count: usize) -> Option<ReferenceValue> {
    reference_tables()
        .fewshot_accuracy
        .get(&count.to_string())
        .map(|&a| ReferenceValue::Accuracy(a))
}

pub(super) fn reference_for_variant(variant: &TaskDescriptionVariant) -> Option<ReferenceValue> {
    reference_tables()
        .description_accuracy
        .get(variant.label())
        .map(|&a| ReferenceValue::Accuracy(a))
}

pub(super) fn reference_for_scheme(name: &str) -> Option<ReferenceValue> {
    reference_tables()
        .scheme_accuracy
        .get(name)
        .map(|&a| ReferenceValue::Accuracy(a))
}

pub(super) fn reference_for_type(t: QuestionType) -> Option<ReferenceValue> {
    reference_tables()
        .answer_similarity_by_type
        .get(t.label())
        .map(|&r| ReferenceValue::Similarity(r))
}

pub(super) fn reference_for_feedback(label: &str) -> Option<ReferenceValue> {
    reference_tables()
        .feedback_similarity
        .get(label)
        .map(|&r| ReferenceValue::Similarity(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_reference_tables_parse_and_cover_the_axes() {
        let tables = reference_tables();
        assert_eq!(tables.fewshot_accuracy.len(), 8);
        assert!((tables.fewshot_accuracy["31"] - 0.81).abs() < 1e-9);
        assert!((tables.fewshot_accuracy["0"] - 0.42).abs() < 1e-9);
        assert!((tables.classification_accuracy - 0.81).abs() < 1e-9);
        assert_eq!(tables.classification_by_type["conceptual"].count, 13);
        assert_eq!(tables.classification_by_type["conceptual"].correct, 11);
        assert!((tables.scheme_accuracy["letters"] - 0.70).abs() < 1e-9);
        assert!((tables.description_accuracy["none"] - 0.74).abs() < 1e-9);
        let conceptual = tables.answer_similarity_by_type["conceptual"];
        assert_eq!(conceptual.count, 34);
        assert!((conceptual.cosine - 0.62).abs() < 1e-9);
        assert!((conceptual.perplexity - 7.61).abs() < 1e-9);
        let good = tables.feedback_similarity["good answer"];
        assert_eq!(good.count, 8);
        assert!((good.cosine - 0.83).abs() < 1e-9);
    }
}
