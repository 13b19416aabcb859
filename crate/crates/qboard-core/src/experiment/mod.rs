//! Experiment runners: the few-shot sweep, the task-description and
//! label-scheme ablations, per-type answer-similarity evaluation, and the
//! feedback split. Each produces an [`ExperimentReport`] whose cells retain
//! per-question rows, so every aggregate can be recomputed from the report
//! alone.

mod report;
mod spec;

pub use report::{
    reference_tables, Cell, CellValue, ExperimentReport, PredictionRow, Provenance,
    ReferenceSimilarity, ReferenceTables, ReferenceValue, SimilarityRow, SkippedQuestion,
};
pub use spec::{BaseConfig, ExperimentAxis, ExperimentSpec};

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{load_corpus, Corpus, CorpusError, HumanFeedback, Question, QuestionType, Resolution, Strictness};
use crate::gateway::{
    build_backend, run_parallel, Backend, CompletionRequest, GatewayError, HttpConfig,
};
use crate::metrics::{
    aggregate_similarity, cosine_similarity, perplexity, rouge_score, score_classification,
    tokenize_for_rouge, MetricsError, SimilarityReport,
};
use crate::prompt::{
    build_answer_prompt, AnswerPromptConfig, ClassificationPromptConfig, PromptError, PromptPack,
    TaskDescriptionVariant,
};
use crate::router::{answer_conceptual, classify, RouterError, DEFAULT_ANSWER_MAX_TOKENS};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {message}")]
    Spec { message: String },
    #[error("this runner expects a {expected} axis, the spec has {actual}")]
    WrongAxis {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("no records carry human feedback")]
    NoFeedbackRecords,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything an experiment needs once, loaded and validated up front.
/// Few-shot counts are checked against the pool before any backend exists,
/// so an oversized count can never trigger a call.
struct Workbench {
    spec: ExperimentSpec,
    corpus: Corpus,
    pack: PromptPack,
    backend: Box<dyn Backend>,
    fixture_sha256: Option<String>,
}

impl Workbench {
    fn load(spec: &ExperimentSpec, live: Option<HttpConfig>) -> Result<Self, ExperimentError> {
        spec.validate()?;
        let pack = PromptPack::load(&spec.prompt_pack)?;
        for count in spec.required_counts() {
            if count > pack.example_pool.len() {
                return Err(ExperimentError::Spec {
                    message: format!(
                        "example count {count} exceeds the pool size {}",
                        pack.example_pool.len()
                    ),
                });
            }
        }
        // the base scheme must exist no matter which axis runs
        pack.schemes.get(&spec.base.scheme)?;
        let strictness = if spec.lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        };
        let corpus = load_corpus(&spec.corpus_path, strictness)?;
        let live = apply_spec_models(live, spec);
        let backend = build_backend(spec.backend, spec.fixture_path.as_deref(), live)?;
        let fixture_sha256 = match &spec.fixture_path {
            Some(path) if path.exists() => Some(sha256_file(path)?),
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            corpus,
            pack,
            backend,
            fixture_sha256,
        })
    }

    fn base_count(&self) -> usize {
        self.spec
            .base
            .example_count
            .unwrap_or(self.pack.example_pool.len())
    }

    fn classification_config(
        &self,
        variant: TaskDescriptionVariant,
        scheme: &str,
        count: usize,
    ) -> Result<ClassificationPromptConfig, ExperimentError> {
        Ok(self.pack.classification_config(variant, scheme, count)?)
    }

    fn resolved(&self) -> Result<Vec<(&Question, QuestionType)>, ExperimentError> {
        let resolved = self.corpus.resolved_questions();
        if resolved.is_empty() {
            return Err(ExperimentError::Spec {
                message: format!(
                    "corpus {} has no questions with a resolved ground-truth label",
                    self.spec.corpus_path.display()
                ),
            });
        }
        Ok(resolved)
    }

    fn into_report(self, cells: Vec<Cell>, question_ids: Vec<String>) -> ExperimentReport {
        ExperimentReport {
            provenance: Provenance {
                backend: self.backend.describe(),
                backend_mode: self.spec.backend.label().to_string(),
                fixture_sha256: self.fixture_sha256,
                timestamp_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                question_ids,
            },
            spec: self.spec,
            cells,
        }
    }
}

fn apply_spec_models(live: Option<HttpConfig>, spec: &ExperimentSpec) -> Option<HttpConfig> {
    let mut live = live?;
    if let Some(model) = &spec.model_id {
        live.model_id = model.clone();
    }
    if let Some(model) = &spec.embed_model_id {
        live.embed_model_id = model.clone();
    }
    Some(live)
}

fn sha256_file(path: &Path) -> Result<String, ExperimentError> {
    let bytes = fs::read(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut h = Sha256::new();
    h.update(&bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// Dispatch on the spec's axis. `live` carries the HTTP configuration for
/// live/record backends and is ignored on replay.
pub fn run_experiment(
    spec: &ExperimentSpec,
    live: Option<HttpConfig>,
) -> Result<ExperimentReport, ExperimentError> {
    match &spec.axis {
        ExperimentAxis::FewShotSweep { .. } => run_fewshot_sweep(spec, live),
        ExperimentAxis::DescriptionVariants { .. } => run_description_ablation(spec, live),
        ExperimentAxis::LabelSchemes { .. } => run_labelscheme_ablation(spec, live),
        ExperimentAxis::AnswerEval { .. } => run_answer_eval(spec, live),
        ExperimentAxis::FeedbackSplit => run_feedback_split(spec, live),
    }
}

fn expect_axis<'a, T>(
    spec: &'a ExperimentSpec,
    expected: &'static str,
    extract: impl FnOnce(&'a ExperimentAxis) -> Option<T>,
) -> Result<T, ExperimentError> {
    extract(&spec.axis).ok_or(ExperimentError::WrongAxis {
        expected,
        actual: spec.axis.kind(),
    })
}

/// Classification accuracy for each few-shot example count.
pub fn run_fewshot_sweep(
    spec: &ExperimentSpec,
    live: Option<HttpConfig>,
) -> Result<ExperimentReport, ExperimentError> {
    let counts = expect_axis(spec, "few_shot_sweep", |a| match a {
        ExperimentAxis::FewShotSweep { counts } => Some(counts.clone()),
        _ => None,
    })?;
    let wb = Workbench::load(spec, live)?;
    let resolved = wb.resolved()?;
    let mut cells = Vec::new();
    for &count in &counts {
        let config =
            wb.classification_config(wb.spec.base.variant.clone(), &wb.spec.base.scheme, count)?;
        cells.push(Cell {
            label: count.to_string(),
            reference: report::reference_for_fewshot(count),
            value: classification_cell(&config, &resolved, wb.backend.as_ref(), wb.spec.parallelism),
        });
    }
    let ids = resolved.iter().map(|(q, _)| q.id.clone()).collect();
    Ok(wb.into_report(cells, ids))
}

/// Classification accuracy for each task-description variant.
pub fn run_description_ablation(
    spec: &ExperimentSpec,
    live: Option<HttpConfig>,
) -> Result<ExperimentReport, ExperimentError> {
    let variants = expect_axis(spec, "description_variants", |a| match a {
        ExperimentAxis::DescriptionVariants { variants } => Some(variants.clone()),
        _ => None,
    })?;
    let wb = Workbench::load(spec, live)?;
    let resolved = wb.resolved()?;
    let count = wb.base_count();
    let mut cells = Vec::new();
    for variant in &variants {
        let config = wb.classification_config(variant.clone(), &wb.spec.base.scheme, count)?;
        cells.push(Cell {
            label: variant.label().to_string(),
            reference: report::reference_for_variant(variant),
            value: classification_cell(&config, &resolved, wb.backend.as_ref(), wb.spec.parallelism),
        });
    }
    let ids = resolved.iter().map(|(q, _)| q.id.clone()).collect();
    Ok(wb.into_report(cells, ids))
}

/// Classification accuracy for each label scheme. Predictions parse under
/// the cell's scheme but always score against the same four types.
pub fn run_labelscheme_ablation(
    spec: &ExperimentSpec,
    live: Option<HttpConfig>,
) -> Result<ExperimentReport, ExperimentError> {
    let schemes = expect_axis(spec, "label_schemes", |a| match a {
        ExperimentAxis::LabelSchemes { schemes } => Some(schemes.clone()),
        _ => None,
    })?;
    let wb = Workbench::load(spec, live)?;
    // every scheme must resolve before any cell runs
    for name in &schemes {
        wb.pack.schemes.get(name)?;
    }
    let resolved = wb.resolved()?;
    let count = wb.base_count();
    let mut cells = Vec::new();
    for name in &schemes {
        let config = wb.classification_config(wb.spec.base.variant.clone(), name, count)?;
        cells.push(Cell {
            label: name.clone(),
            reference: report::reference_for_scheme(name),
            value: classification_cell(&config, &resolved, wb.backend.as_ref(), wb.spec.parallelism),
        });
    }
    let ids = resolved.iter().map(|(q, _)| q.id.clone()).collect();
    Ok(wb.into_report(cells, ids))
}

fn classification_cell(
    config: &ClassificationPromptConfig,
    resolved: &[(&Question, QuestionType)],
    backend: &dyn Backend,
    parallelism: usize,
) -> CellValue {
    let results = run_parallel(resolved, parallelism, |_, (question, truth)| {
        classify(question, config, backend).map(|(parsed, completion)| PredictionRow {
            question_id: question.id.clone(),
            truth: *truth,
            predicted: parsed.ok(),
            raw: completion.text,
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for result in results {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                return CellValue::Failed {
                    error: e.to_string(),
                }
            }
        }
    }
    let correct = rows.iter().filter(|r| r.predicted == Some(r.truth)).count();
    let pairs: Vec<(QuestionType, QuestionType)> = rows
        .iter()
        .filter_map(|r| r.predicted.map(|p| (r.truth, p)))
        .collect();
    let report = score_classification(&pairs).ok().map(|(report, _)| report);
    CellValue::Accuracy {
        questions: rows.len(),
        correct,
        accuracy: correct as f64 / rows.len() as f64,
        report,
        rows,
    }
}

/// The completion request used to echo-score `target` under `prompt`.
/// Public so fixture tooling can reproduce the fingerprint.
pub fn echo_score_request(prompt: String, target: &str) -> CompletionRequest {
    CompletionRequest::new(prompt)
        .with_max_tokens(1)
        .echo_scoring(target)
}

fn similarity_for(
    question: &Question,
    model_answer: String,
    instructor_answer: &str,
    backend: &dyn Backend,
) -> Result<SimilarityRow, ExperimentError> {
    let model_embedding = backend.embed(&model_answer)?;
    let instructor_embedding = backend.embed(instructor_answer)?;
    let cosine = cosine_similarity(&model_embedding, &instructor_embedding)?;

    let rouge = rouge_score(
        &tokenize_for_rouge(&model_answer),
        &tokenize_for_rouge(instructor_answer),
    );

    let answer_prompt = build_answer_prompt(&AnswerPromptConfig::default(), question);
    let echoed = backend.complete(&echo_score_request(answer_prompt, instructor_answer))?;
    let logprobs = echoed
        .logprob_values()
        .ok_or_else(|| GatewayError::InvalidResponse {
            message: "echo scoring returned no logprobs".into(),
        })?;
    let perplexity = perplexity(&logprobs)?;

    Ok(SimilarityRow {
        question_id: question.id.clone(),
        model_answer,
        similarity: SimilarityReport {
            cosine,
            rouge,
            perplexity,
        },
    })
}

enum RowOutcome {
    Row(Box<SimilarityRow>),
    Skipped(SkippedQuestion),
    Error(String),
}

fn similarity_cell(rows: Vec<RowOutcome>) -> CellValue {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for outcome in rows {
        match outcome {
            RowOutcome::Row(row) => kept.push(*row),
            RowOutcome::Skipped(s) => skipped.push(s),
            RowOutcome::Error(error) => return CellValue::Failed { error },
        }
    }
    let reports: Vec<SimilarityReport> = kept.iter().map(|r| r.similarity.clone()).collect();
    match aggregate_similarity(&reports) {
        Some(aggregate) => CellValue::Similarity {
            aggregate,
            rows: kept,
            skipped,
        },
        None => CellValue::Failed {
            error: "no scoreable questions in this cell".into(),
        },
    }
}

/// Generate an answer for every resolved question of the requested types via
/// the general answer prompt, then score it against the instructor answer.
/// Questions without an instructor answer are skipped with a warning row.
pub fn run_answer_eval(
    spec: &ExperimentSpec,
    live: Option<HttpConfig>,
) -> Result<ExperimentReport, ExperimentError> {
    let types = expect_axis(spec, "answer_eval", |a| match a {
        ExperimentAxis::AnswerEval { types } => {
            Some(types.clone().unwrap_or_else(|| QuestionType::ALL.to_vec()))
        }
        _ => None,
    })?;
    let wb = Workbench::load(spec, live)?;
    let resolved = wb.resolved()?;
    let mut cells = Vec::new();
    let mut ids = Vec::new();
    for &cell_type in &types {
        let questions: Vec<&Question> = resolved
            .iter()
            .filter(|(_, t)| *t == cell_type)
            .map(|(q, _)| *q)
            .collect();
        ids.extend(questions.iter().map(|q| q.id.clone()));
        let outcomes = run_parallel(&questions, wb.spec.parallelism, |_, question| {
            let instructor = wb
                .corpus
                .record(&question.id)
                .and_then(|r| r.answer.as_ref())
                .and_then(|a| a.instructor_answer.clone());
            let Some(instructor) = instructor else {
                return RowOutcome::Skipped(SkippedQuestion {
                    question_id: question.id.clone(),
                    reason: "no instructor answer".into(),
                });
            };
            let generated = match answer_conceptual(
                question,
                &AnswerPromptConfig::default(),
                DEFAULT_ANSWER_MAX_TOKENS,
                wb.backend.as_ref(),
            ) {
                Ok(answer) => answer,
                Err(e) => return RowOutcome::Error(e.to_string()),
            };
            match similarity_for(question, generated, &instructor, wb.backend.as_ref()) {
                Ok(row) => RowOutcome::Row(Box::new(row)),
                Err(e) => RowOutcome::Error(e.to_string()),
            }
        });
        cells.push(Cell {
            label: cell_type.label().to_string(),
            reference: report::reference_for_type(cell_type),
            value: similarity_cell(outcomes),
        });
    }
    Ok(wb.into_report(cells, ids))
}

/// Score the stored model answers of feedback-labeled questions and
/// aggregate per feedback category. Cells appear only for nonempty
/// partitions, in good/bad order.
pub fn run_feedback_split(
    spec: &ExperimentSpec,
    live: Option<HttpConfig>,
) -> Result<ExperimentReport, ExperimentError> {
    expect_axis(spec, "feedback_split", |a| match a {
        ExperimentAxis::FeedbackSplit => Some(()),
        _ => None,
    })?;
    let wb = Workbench::load(spec, live)?;

    struct Item<'a> {
        question: &'a Question,
        model_answer: String,
        instructor_answer: Option<String>,
        feedback: HumanFeedback,
        resolved_type: Option<QuestionType>,
    }
    let mut items = Vec::new();
    for record in wb.corpus.records() {
        let Some(answer) = &record.answer else { continue };
        let Some(feedback) = answer.human_feedback else { continue };
        let model_answer = answer.model_answer.clone().unwrap_or_default();
        let resolved_type = record.annotations.as_ref().and_then(|ann| {
            match crate::corpus::resolve_ground_truth(ann).ok()?.resolution {
                Resolution::Resolved(t) => Some(t),
                Resolution::Discarded => None,
            }
        });
        items.push(Item {
            question: &record.question,
            model_answer,
            instructor_answer: answer.instructor_answer.clone(),
            feedback,
            resolved_type,
        });
    }
    if items.is_empty() {
        return Err(ExperimentError::NoFeedbackRecords);
    }

    let mut cells = Vec::new();
    let mut ids = Vec::new();
    for feedback in [HumanFeedback::GoodAnswer, HumanFeedback::BadAnswer] {
        let partition: Vec<&Item> = items.iter().filter(|i| i.feedback == feedback).collect();
        if partition.is_empty() {
            continue;
        }
        ids.extend(partition.iter().map(|i| i.question.id.clone()));
        let outcomes = run_parallel(&partition, wb.spec.parallelism, |_, item| {
            // the split evaluates answers to conceptual questions; anything
            // labeled otherwise is reported, not scored
            if let Some(t) = item.resolved_type {
                if t != QuestionType::Conceptual {
                    return RowOutcome::Skipped(SkippedQuestion {
                        question_id: item.question.id.clone(),
                        reason: format!("ground-truth type is {t}, not conceptual"),
                    });
                }
            }
            let Some(instructor) = &item.instructor_answer else {
                return RowOutcome::Skipped(SkippedQuestion {
                    question_id: item.question.id.clone(),
                    reason: "no instructor answer".into(),
                });
            };
            match similarity_for(
                item.question,
                item.model_answer.clone(),
                instructor,
                wb.backend.as_ref(),
            ) {
                Ok(row) => RowOutcome::Row(Box::new(row)),
                Err(e) => RowOutcome::Error(e.to_string()),
            }
        });
        let label = match feedback {
            HumanFeedback::GoodAnswer => "good answer",
            HumanFeedback::BadAnswer => "bad answer",
        };
        cells.push(Cell {
            label: label.to_string(),
            reference: report::reference_for_feedback(label),
            value: similarity_cell(outcomes),
        });
    }
    Ok(wb.into_report(cells, ids))
}
