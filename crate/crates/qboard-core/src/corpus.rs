//! Corpus data model: questions, multi-annotator labels, majority-vote ground
//! truth, and the JSONL load/save round trip.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four-way question taxonomy. The order here is fixed and shared by the
/// confusion matrix, the label schemes, and report rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(rename = "conceptual")]
    Conceptual,
    #[serde(rename = "homework")]
    Homework,
    #[serde(rename = "logistics")]
    Logistics,
    #[serde(rename = "not answerable")]
    NotAnswerable,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Conceptual,
        QuestionType::Homework,
        QuestionType::Logistics,
        QuestionType::NotAnswerable,
    ];

    /// Canonical lowercase label used in corpus files and the default prompt
    /// vocabulary.
    pub fn label(self) -> &'static str {
        match self {
            QuestionType::Conceptual => "conceptual",
            QuestionType::Homework => "homework",
            QuestionType::Logistics => "logistics",
            QuestionType::NotAnswerable => "not answerable",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.label() == s)
    }

    /// Position in the fixed label order; used to index matrices and count
    /// arrays.
    pub fn index(self) -> usize {
        match self {
            QuestionType::Conceptual => 0,
            QuestionType::Homework => 1,
            QuestionType::Logistics => 2,
            QuestionType::NotAnswerable => 3,
        }
    }

    pub fn allowed_labels() -> String {
        Self::ALL
            .iter()
            .map(|t| t.label())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Instructor verdict on a stored model answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HumanFeedback {
    #[serde(rename = "good")]
    GoodAnswer,
    #[serde(rename = "bad")]
    BadAnswer,
}

impl HumanFeedback {
    pub fn label(self) -> &'static str {
        match self {
            HumanFeedback::GoodAnswer => "good",
            HumanFeedback::BadAnswer => "bad",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "good" => Some(HumanFeedback::GoodAnswer),
            "bad" => Some(HumanFeedback::BadAnswer),
            _ => None,
        }
    }
}

/// One student post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    /// Course-offering tag, e.g. a term identifier.
    pub offering: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

/// One annotator's vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator: String,
    pub label: QuestionType,
}

/// The full set of annotator votes for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    pub question_id: String,
    pub labels: Vec<Annotation>,
}

impl AnnotationSet {
    /// Requires at least one vote and distinct annotator ids.
    pub fn new(question_id: impl Into<String>, labels: Vec<Annotation>) -> Result<Self, CorpusError> {
        let question_id = question_id.into();
        if labels.is_empty() {
            return Err(CorpusError::EmptyAnnotationSet { question_id });
        }
        let mut seen = BTreeSet::new();
        for a in &labels {
            if !seen.insert(a.annotator.as_str()) {
                return Err(CorpusError::DuplicateAnnotator {
                    question_id,
                    annotator: a.annotator.clone(),
                });
            }
        }
        Ok(Self { question_id, labels })
    }
}

/// Outcome of majority-vote aggregation for one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Resolved(QuestionType),
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthLabel {
    pub question_id: String,
    pub resolution: Resolution,
}

impl GroundTruthLabel {
    pub fn resolved_type(&self) -> Option<QuestionType> {
        match self.resolution {
            Resolution::Resolved(t) => Some(t),
            Resolution::Discarded => None,
        }
    }
}

/// Stored answers and instructor feedback for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerRecord {
    pub question_id: String,
    pub model_answer: Option<String>,
    pub instructor_answer: Option<String>,
    pub human_feedback: Option<HumanFeedback>,
    pub failure_note: Option<String>,
}

/// One corpus line: a question plus whatever annotations and answers the line
/// carried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub question: Question,
    pub annotations: Option<AnnotationSet>,
    pub answer: Option<AnswerRecord>,
}

/// An immutable, validated corpus. Line order is preserved.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    records: Vec<CorpusRecord>,
}

impl Corpus {
    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.question.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: r.question.id.clone(),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.records
            .iter()
            .find(|r| r.question.id == id)
            .map(|r| &r.question)
    }

    pub fn record(&self, id: &str) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.question.id == id)
    }

    /// Ground truth for every annotated record, in corpus order.
    pub fn ground_truths(&self) -> Result<Vec<GroundTruthLabel>, CorpusError> {
        self.records
            .iter()
            .filter_map(|r| r.annotations.as_ref())
            .map(resolve_ground_truth)
            .collect()
    }

    /// Questions whose annotations resolve to a strict-majority label,
    /// paired with that label. Discarded and unannotated questions are
    /// excluded, mirroring how every metric is computed.
    pub fn resolved_questions(&self) -> Vec<(&Question, QuestionType)> {
        self.records
            .iter()
            .filter_map(|r| {
                let ann = r.annotations.as_ref()?;
                match resolve_ground_truth(ann).ok()?.resolution {
                    Resolution::Resolved(t) => Some((&r.question, t)),
                    Resolution::Discarded => None,
                }
            })
            .collect()
    }

    pub fn has_annotations(&self) -> bool {
        self.records.iter().any(|r| r.annotations.is_some())
    }
}

/// Per-type resolved counts plus the discarded count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusSummary {
    pub resolved_counts: [usize; 4],
    pub discarded: usize,
}

impl CorpusSummary {
    pub fn count(&self, t: QuestionType) -> usize {
        self.resolved_counts[t.index()]
    }

    pub fn resolved_total(&self) -> usize {
        self.resolved_counts.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.resolved_total() + self.discarded
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} resolved, {} discarded", self.resolved_total(), self.discarded)
    }
}

/// Unknown-key handling for corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Reject keys outside the schema.
    Strict,
    /// Ignore unknown keys.
    Lenient,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown label \"{label}\"; allowed labels are: {allowed}")]
    UnknownLabel {
        line: usize,
        label: String,
        allowed: String,
    },
    #[error("line {line}: unknown key \"{key}\" (strict mode; use lenient parsing to ignore)")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate question id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("annotation set for \"{question_id}\" has no labels")]
    EmptyAnnotationSet { question_id: String },
    #[error("annotation set for \"{question_id}\" repeats annotator \"{annotator}\"")]
    DuplicateAnnotator {
        question_id: String,
        annotator: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Wire form of one corpus line. Field order here is the serialization order.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    offering: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<Vec<RawAnnotation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instructor_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    human_feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    annotator: String,
    label: String,
}

const RECORD_KEYS: &[&str] = &[
    "id",
    "text",
    "offering",
    "annotations",
    "instructor_answer",
    "model_answer",
    "human_feedback",
    "failure_note",
    "meta",
];

const ANNOTATION_KEYS: &[&str] = &["annotator", "label"];

/// Load and validate a JSONL corpus. Line numbers are 1-based in every error.
pub fn load_corpus(path: impl AsRef<Path>, strictness: Strictness) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if strictness == Strictness::Strict {
            check_keys(&value, line_no)?;
        }
        let raw: RawRecord = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = validate_record(raw, line_no)?;
        if !seen_ids.insert(record.question.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: record.question.id.clone(),
            });
        }
        records.push(record);
    }
    Ok(Corpus { records })
}

fn check_keys(value: &serde_json::Value, line: usize) -> Result<(), CorpusError> {
    let obj = value.as_object().ok_or_else(|| CorpusError::Parse {
        line,
        message: "expected a JSON object".into(),
    })?;
    for key in obj.keys() {
        if !RECORD_KEYS.contains(&key.as_str()) {
            return Err(CorpusError::UnknownKey {
                line,
                key: key.clone(),
            });
        }
    }
    if let Some(anns) = obj.get("annotations").and_then(|v| v.as_array()) {
        for ann in anns {
            if let Some(ann_obj) = ann.as_object() {
                for key in ann_obj.keys() {
                    if !ANNOTATION_KEYS.contains(&key.as_str()) {
                        return Err(CorpusError::UnknownKey {
                            line,
                            key: key.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

fn validate_record(raw: RawRecord, line: usize) -> Result<CorpusRecord, CorpusError> {
    if raw.id.is_empty() {
        return Err(CorpusError::Invalid {
            line,
            message: "question id is empty".into(),
        });
    }
    if raw.text.trim().is_empty() {
        return Err(CorpusError::Invalid {
            line,
            message: format!("question \"{}\" has empty text", raw.id),
        });
    }

    let annotations = match raw.annotations {
        None => None,
        Some(anns) => {
            let mut labels = Vec::with_capacity(anns.len());
            for ann in anns {
                let label = QuestionType::from_label(&ann.label).ok_or_else(|| {
                    CorpusError::UnknownLabel {
                        line,
                        label: ann.label.clone(),
                        allowed: QuestionType::allowed_labels(),
                    }
                })?;
                labels.push(Annotation {
                    annotator: ann.annotator,
                    label,
                });
            }
            Some(
                AnnotationSet::new(raw.id.clone(), labels).map_err(|e| CorpusError::Invalid {
                    line,
                    message: e.to_string(),
                })?,
            )
        }
    };

    let human_feedback = match raw.human_feedback.as_deref() {
        None => None,
        Some(s) => Some(HumanFeedback::from_label(s).ok_or_else(|| CorpusError::Invalid {
            line,
            message: format!("unknown human_feedback \"{s}\"; allowed: good, bad"),
        })?),
    };
    let has_model_answer = raw
        .model_answer
        .as_deref()
        .is_some_and(|s| !s.trim().is_empty());
    if human_feedback.is_some() && !has_model_answer {
        return Err(CorpusError::Invalid {
            line,
            message: format!(
                "question \"{}\" carries human_feedback without a model_answer",
                raw.id
            ),
        });
    }

    let answer = if raw.model_answer.is_some()
        || raw.instructor_answer.is_some()
        || human_feedback.is_some()
        || raw.failure_note.is_some()
    {
        Some(AnswerRecord {
            question_id: raw.id.clone(),
            model_answer: raw.model_answer,
            instructor_answer: raw.instructor_answer,
            human_feedback,
            failure_note: raw.failure_note,
        })
    } else {
        None
    };

    Ok(CorpusRecord {
        question: Question {
            id: raw.id,
            text: raw.text,
            offering: raw.offering,
            meta: raw.meta.unwrap_or_default(),
        },
        annotations,
        answer,
    })
}

/// Write a corpus back to the JSONL schema. `load_corpus` of the result
/// reproduces the input corpus exactly.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for record in &corpus.records {
        let raw = RawRecord {
            id: record.question.id.clone(),
            text: record.question.text.clone(),
            offering: record.question.offering.clone(),
            annotations: record.annotations.as_ref().map(|set| {
                set.labels
                    .iter()
                    .map(|a| RawAnnotation {
                        annotator: a.annotator.clone(),
                        label: a.label.label().to_string(),
                    })
                    .collect()
            }),
            instructor_answer: record.answer.as_ref().and_then(|a| a.instructor_answer.clone()),
            model_answer: record.answer.as_ref().and_then(|a| a.model_answer.clone()),
            human_feedback: record
                .answer
                .as_ref()
                .and_then(|a| a.human_feedback)
                .map(|f| f.label().to_string()),
            failure_note: record.answer.as_ref().and_then(|a| a.failure_note.clone()),
            meta: if record.question.meta.is_empty() {
                None
            } else {
                Some(record.question.meta.clone())
            },
        };
        let line = serde_json::to_string(&raw).expect("corpus records serialize");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Majority-vote aggregation: a label wins only when its vote count strictly
/// exceeds every rival's; any tie for the top discards the question.
pub fn resolve_ground_truth(annotations: &AnnotationSet) -> Result<GroundTruthLabel, CorpusError> {
    if annotations.labels.is_empty() {
        return Err(CorpusError::EmptyAnnotationSet {
            question_id: annotations.question_id.clone(),
        });
    }
    let mut counts = [0usize; 4];
    for a in &annotations.labels {
        counts[a.label.index()] += 1;
    }
    let max = *counts.iter().max().expect("four counts");
    let winners: Vec<QuestionType> = QuestionType::ALL
        .iter()
        .copied()
        .filter(|t| counts[t.index()] == max)
        .collect();
    let resolution = if winners.len() == 1 {
        Resolution::Resolved(winners[0])
    } else {
        Resolution::Discarded
    };
    Ok(GroundTruthLabel {
        question_id: annotations.question_id.clone(),
        resolution,
    })
}

/// Count resolved labels per type plus discards.
pub fn corpus_summary(ground_truths: &[GroundTruthLabel]) -> CorpusSummary {
    let mut summary = CorpusSummary::default();
    for gt in ground_truths {
        match gt.resolution {
            Resolution::Resolved(t) => summary.resolved_counts[t.index()] += 1,
            Resolution::Discarded => summary.discarded += 1,
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(labels: &[QuestionType]) -> AnnotationSet {
        let labels = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Annotation {
                annotator: format!("a{i}"),
                label,
            })
            .collect();
        AnnotationSet::new("q", labels).unwrap()
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn loads_well_formed_lines() {
        let f = write_lines(&[
            r#"{"id": "q1", "text": "What is overfitting?", "offering": "F22"}"#,
            r#"{"id": "q2", "text": "Which room is the exam in?", "offering": "F22", "annotations": [{"annotator": "s1", "label": "logistics"}]}"#,
            r#"{"id": "q3", "text": "Lab 1 z?", "offering": "F22", "instructor_answer": "See the handout.", "model_answer": "z is the logit.", "human_feedback": "bad"}"#,
        ]);
        let corpus = load_corpus(f.path(), Strictness::Strict).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(corpus.records()[1].annotations.is_some());
        let answer = corpus.records()[2].answer.as_ref().unwrap();
        assert_eq!(answer.human_feedback, Some(HumanFeedback::BadAnswer));
    }

    #[test]
    fn rejects_unknown_label_naming_line_and_allowed() {
        let f = write_lines(&[
            r#"{"id": "q1", "text": "t", "offering": "F22"}"#,
            r#"{"id": "q2", "text": "t", "offering": "F22", "annotations": [{"annotator": "s1", "label": "homwork"}]}"#,
        ]);
        let err = load_corpus(f.path(), Strictness::Strict).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("homwork"), "{msg}");
        for label in ["conceptual", "homework", "logistics", "not answerable"] {
            assert!(msg.contains(label), "{msg} missing {label}");
        }
    }

    #[test]
    fn rejects_duplicate_id() {
        let f = write_lines(&[
            r#"{"id": "q7", "text": "t", "offering": "F22"}"#,
            r#"{"id": "q7", "text": "u", "offering": "F22"}"#,
        ]);
        let err = load_corpus(f.path(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, ref id } if id == "q7"));
    }

    #[test]
    fn strict_rejects_unknown_key_lenient_ignores() {
        let line = r#"{"id": "q1", "text": "t", "offering": "F22", "spam": 1}"#;
        let f = write_lines(&[line]);
        let err = load_corpus(f.path(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownKey { ref key, .. } if key == "spam"));
        let corpus = load_corpus(f.path(), Strictness::Lenient).unwrap();
        assert_eq!(corpus.len(), 1);
    }

    #[test]
    fn rejects_feedback_without_model_answer() {
        let f = write_lines(&[
            r#"{"id": "q1", "text": "t", "offering": "F22", "human_feedback": "good"}"#,
        ]);
        let err = load_corpus(f.path(), Strictness::Strict).unwrap_err();
        assert!(err.to_string().contains("human_feedback"));
    }

    #[test]
    fn rejects_empty_text() {
        let f = write_lines(&[r#"{"id": "q1", "text": "   ", "offering": "F22"}"#]);
        assert!(load_corpus(f.path(), Strictness::Strict).is_err());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_lines(&[
            r#"{"id": "q1", "text": "t", "offering": "F22"}"#,
            r#"{"id": "q2""#,
        ]);
        let err = load_corpus(f.path(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }));
    }

    #[test]
    fn majority_two_of_three_resolves() {
        let gt = resolve_ground_truth(&set(&[
            QuestionType::Homework,
            QuestionType::Homework,
            QuestionType::Logistics,
        ]))
        .unwrap();
        assert_eq!(gt.resolution, Resolution::Resolved(QuestionType::Homework));
    }

    #[test]
    fn three_way_split_discards() {
        let gt = resolve_ground_truth(&set(&[
            QuestionType::Conceptual,
            QuestionType::Homework,
            QuestionType::Logistics,
        ]))
        .unwrap();
        assert_eq!(gt.resolution, Resolution::Discarded);
    }

    #[test]
    fn unanimous_resolves() {
        let gt = resolve_ground_truth(&set(&[QuestionType::Logistics; 3])).unwrap();
        assert_eq!(gt.resolution, Resolution::Resolved(QuestionType::Logistics));
    }

    #[test]
    fn two_two_tie_discards() {
        let gt = resolve_ground_truth(&set(&[
            QuestionType::Homework,
            QuestionType::Homework,
            QuestionType::Logistics,
            QuestionType::Logistics,
        ]))
        .unwrap();
        assert_eq!(gt.resolution, Resolution::Discarded);
    }

    #[test]
    fn empty_annotation_set_is_an_error() {
        let s = AnnotationSet {
            question_id: "q".into(),
            labels: vec![],
        };
        assert!(resolve_ground_truth(&s).is_err());
    }

    #[test]
    fn duplicate_annotator_rejected() {
        let labels = vec![
            Annotation {
                annotator: "s1".into(),
                label: QuestionType::Homework,
            },
            Annotation {
                annotator: "s1".into(),
                label: QuestionType::Logistics,
            },
        ];
        assert!(AnnotationSet::new("q", labels).is_err());
    }

    #[test]
    fn summary_counts_sum_to_input_length() {
        let gts = vec![
            GroundTruthLabel {
                question_id: "a".into(),
                resolution: Resolution::Resolved(QuestionType::Conceptual),
            },
            GroundTruthLabel {
                question_id: "b".into(),
                resolution: Resolution::Discarded,
            },
            GroundTruthLabel {
                question_id: "c".into(),
                resolution: Resolution::Resolved(QuestionType::Conceptual),
            },
        ];
        let summary = corpus_summary(&gts);
        assert_eq!(summary.count(QuestionType::Conceptual), 2);
        assert_eq!(summary.discarded, 1);
        assert_eq!(summary.total(), gts.len());
        assert_eq!(summary.to_string(), "2 resolved, 1 discarded");
    }

    #[test]
    fn summary_of_empty_list_is_all_zero() {
        let summary = corpus_summary(&[]);
        assert_eq!(summary.total(), 0);
        assert_eq!(summary.resolved_counts, [0; 4]);
    }

    // Every label multiset of size <= 5 admits at most one strict-majority
    // winner.
    #[test]
    fn at_most_one_strict_majority_exhaustive() {
        for size in 1usize..=5 {
            let mut assignment = vec![0usize; size];
            loop {
                let mut counts = [0usize; 4];
                for &a in &assignment {
                    counts[a] += 1;
                }
                let winners = (0..4)
                    .filter(|&t| (0..4).all(|u| u == t || counts[t] > counts[u]))
                    .count();
                assert!(winners <= 1);

                // next assignment in base-4
                let mut i = 0;
                loop {
                    if i == size {
                        break;
                    }
                    assignment[i] += 1;
                    if assignment[i] < 4 {
                        break;
                    }
                    assignment[i] = 0;
                    i += 1;
                }
                if i == size {
                    break;
                }
            }
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let f = write_lines(&[
            r#"{"id": "q1", "text": "What is overfitting?", "offering": "F22", "annotations": [{"annotator": "s1", "label": "conceptual"}, {"annotator": "s2", "label": "conceptual"}, {"annotator": "s3", "label": "homework"}], "instructor_answer": "Memorizing noise.", "model_answer": "Fitting noise in train data.", "human_feedback": "good", "meta": {"thread": "12"}}"#,
            r#"{"id": "q2", "text": "Exam room?", "offering": "F22"}"#,
        ]);
        let corpus = load_corpus(f.path(), Strictness::Strict).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&corpus, out.path()).unwrap();
        let reloaded = load_corpus(out.path(), Strictness::Strict).unwrap();
        assert_eq!(corpus, reloaded);
    }

    fn arb_type() -> impl Strategy<Value = QuestionType> {
        prop::sample::select(QuestionType::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn resolution_is_permutation_invariant(
            labels in prop::collection::vec(arb_type(), 1..8),
            seed in any::<u64>(),
        ) {
            let base = set(&labels);
            let mut shuffled = base.labels.clone();
            // deterministic Fisher-Yates from the seed
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let permuted = AnnotationSet { question_id: "q".into(), labels: shuffled };
            prop_assert_eq!(
                resolve_ground_truth(&base).unwrap().resolution,
                resolve_ground_truth(&permuted).unwrap().resolution
            );
        }

        #[test]
        fn strict_majority_matches_count_definition(labels in prop::collection::vec(arb_type(), 1..8)) {
            let s = set(&labels);
            let gt = resolve_ground_truth(&s).unwrap();
            let mut counts = [0usize; 4];
            for l in &labels { counts[l.index()] += 1; }
            match gt.resolution {
                Resolution::Resolved(t) => {
                    for u in QuestionType::ALL {
                        if u != t {
                            prop_assert!(counts[t.index()] > counts[u.index()]);
                        }
                    }
                }
                Resolution::Discarded => {
                    let max = *counts.iter().max().unwrap();
                    prop_assert!(counts.iter().filter(|&&c| c == max).count() > 1);
                }
            }
        }
    }
}
