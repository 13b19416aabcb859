//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qboard_core::corpus::{
    corpus_summary, load_corpus, resolve_ground_truth, Corpus, QuestionType,
};
use qboard_core::experiment::{run_experiment, ExperimentAxis, ExperimentSpec};
use qboard_core::gateway::{run_parallel, BackendMode};
use qboard_core::metrics::render::{classification_csv, classification_table};
use qboard_core::metrics::score_classification;
use qboard_core::prompt::{build_classification_prompt, PromptPack, TaskDescriptionVariant};
use qboard_core::router::{
    classify as classify_question, run_pipeline, AnswerOutcome, ContextProvider, PipelineConfig,
    RouteAction,
};
use qboard_core::Question;

use crate::config::{CliConfig, CliError};
use crate::GlobalArgs;

pub fn list_axes() -> Result<(), CliError> {
    for kind in ExperimentAxis::KINDS {
        println!("{kind}");
    }
    Ok(())
}

fn load(config: &CliConfig, corpus_path: &Path) -> Result<Corpus, CliError> {
    Ok(load_corpus(corpus_path, config.strictness)?)
}

fn ensure_out_dir(config: &CliConfig) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| CliError::Config(format!("output dir {}: {e}", config.out_dir.display())))?;
    Ok(config.out_dir.clone())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| CliError::Config(format!("serializing output: {e}")))?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct GroundTruthRow<'a> {
    question_id: &'a str,
    label: Option<&'static str>,
}

pub fn aggregate(config: &CliConfig, corpus_path: &Path) -> Result<(), CliError> {
    let corpus = load(config, corpus_path)?;
    let annotated: Vec<_> = corpus
        .records()
        .iter()
        .filter_map(|r| r.annotations.as_ref())
        .collect();
    if annotated.is_empty() {
        return Err(CliError::Corpus(format!(
            "corpus {} has no annotated questions",
            corpus_path.display()
        )));
    }
    let mut ground_truths = Vec::with_capacity(annotated.len());
    for set in annotated {
        ground_truths.push(resolve_ground_truth(set)?);
    }
    let summary = corpus_summary(&ground_truths);

    let out_dir = ensure_out_dir(config)?;
    let rows: Vec<GroundTruthRow> = ground_truths
        .iter()
        .map(|gt| GroundTruthRow {
            question_id: &gt.question_id,
            label: gt.resolved_type().map(|t| t.label()),
        })
        .collect();
    write_jsonl(&out_dir.join("ground_truth.jsonl"), &rows)?;

    for t in QuestionType::ALL {
        println!("{}: {}", t, summary.count(t));
    }
    println!("discarded: {}", summary.discarded);
    println!("{summary}");
    eprintln!("wrote {}", out_dir.join("ground_truth.jsonl").display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionOutputRow {
    question_id: String,
    truth: QuestionType,
    predicted: Option<QuestionType>,
    raw: String,
}

pub fn classify(
    config: &CliConfig,
    corpus_path: &Path,
    scheme: Option<&str>,
    examples: Option<usize>,
) -> Result<(), CliError> {
    let corpus = load(config, corpus_path)?;
    let resolved = corpus.resolved_questions();
    if resolved.is_empty() {
        return Err(CliError::Corpus(format!(
            "corpus {} has no questions with a resolved ground-truth label",
            corpus_path.display()
        )));
    }
    let pack = PromptPack::load(&config.prompt_pack)?;
    let count = examples.unwrap_or(pack.example_pool.len());
    let prompt_config = pack.classification_config(
        TaskDescriptionVariant::Full,
        scheme.unwrap_or("canonical"),
        count,
    )?;

    if config.dry_run {
        let (first, _) = resolved[0];
        let prompt = build_classification_prompt(&prompt_config, first)?;
        println!("{prompt}");
        return Ok(());
    }

    let backend = config.backend()?;
    let results = run_parallel(&resolved, config.parallelism, |_, (question, truth)| {
        classify_question(question, &prompt_config, backend.as_ref()).map(|(parsed, completion)| {
            PredictionOutputRow {
                question_id: question.id.clone(),
                truth: *truth,
                predicted: parsed.ok(),
                raw: completion.text,
            }
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for result in results {
        rows.push(result.map_err(|e| CliError::Backend(e.to_string()))?);
    }

    let out_dir = ensure_out_dir(config)?;
    write_jsonl(&out_dir.join("predictions.jsonl"), &rows)?;

    let parse_failures = rows.iter().filter(|r| r.predicted.is_none()).count();
    if parse_failures > 0 {
        eprintln!("warning: {parse_failures} completion(s) did not parse as a label");
    }
    let pairs: Vec<(QuestionType, QuestionType)> = rows
        .iter()
        .filter_map(|r| r.predicted.map(|p| (r.truth, p)))
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Backend(
            "no completion parsed as a label; nothing to score".into(),
        ));
    }
    let (report, _) = score_classification(&pairs)
        .map_err(|e| CliError::Backend(e.to_string()))?;
    let table = classification_table(&report);
    print!("{table}");
    fs::write(out_dir.join("report.txt"), &table)
        .map_err(|e| CliError::Config(format!("{}: {e}", out_dir.join("report.txt").display())))?;
    fs::write(out_dir.join("report.csv"), classification_csv(&report))
        .map_err(|e| CliError::Config(format!("{}: {e}", out_dir.join("report.csv").display())))?;
    eprintln!("wrote {}", out_dir.join("predictions.jsonl").display());
    Ok(())
}

/// Serves every readable file in a directory (sorted by name) as one context
/// document for each contextual question.
struct DirContext {
    docs: Vec<String>,
}

impl DirContext {
    fn load(dir: &Path) -> Result<Self, CliError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| CliError::Config(format!("context dir {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut docs = Vec::with_capacity(paths.len());
        for path in paths {
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            docs.push(text.trim_end().to_string());
        }
        Ok(Self { docs })
    }
}

impl ContextProvider for DirContext {
    fn context_for(&self, _question: &Question) -> Vec<String> {
        self.docs.clone()
    }
}

#[derive(Serialize)]
struct AnswerOutputRow {
    question_id: String,
    predicted: Option<QuestionType>,
    raw: Option<String>,
    action: Option<&'static str>,
    fallback_applied: bool,
    status: &'static str,
    model_answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

pub fn answer(
    config: &CliConfig,
    corpus_path: &Path,
    context_dir: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = load(config, corpus_path)?;
    if corpus.is_empty() {
        return Err(CliError::Corpus(format!(
            "corpus {} is empty",
            corpus_path.display()
        )));
    }
    let pack = PromptPack::load(&config.prompt_pack)?;
    let prompt_config =
        pack.classification_config(TaskDescriptionVariant::Full, "canonical", pack.example_pool.len())?;
    let questions: Vec<Question> = corpus.records().iter().map(|r| r.question.clone()).collect();

    if config.dry_run {
        // the pipeline's first constructed prompt is the classification one
        let prompt = build_classification_prompt(&prompt_config, &questions[0])?;
        println!("{prompt}");
        return Ok(());
    }

    let provider = match context_dir {
        Some(dir) => Some(DirContext::load(dir)?),
        None => None,
    };
    let backend = config.backend()?;
    let mut pipeline_config = PipelineConfig::new(prompt_config);
    pipeline_config.parallelism = config.parallelism;
    let records = run_pipeline(
        &questions,
        &pipeline_config,
        provider.as_ref().map(|p| p as &dyn ContextProvider),
        backend.as_ref(),
    );

    let mut rows = Vec::with_capacity(records.len());
    let mut backend_failures = 0usize;
    for record in &records {
        let decision = record.decision.as_ref();
        let (status, model_answer, reason): (&'static str, String, Option<String>) =
            match (&record.outcome, &record.error) {
                (Some(AnswerOutcome::Answered(text)), _) => ("answered", text.clone(), None),
                (Some(AnswerOutcome::NeedsContext), _) => (
                    "needs_context",
                    String::new(),
                    Some("no context documents supplied".into()),
                ),
                (Some(AnswerOutcome::Ignored), _) => {
                    let reason = match decision {
                        Some(d) if d.fallback_applied => {
                            "classification did not parse; treated as not answerable".to_string()
                        }
                        _ => "classified as not answerable".to_string(),
                    };
                    ("ignored", String::new(), Some(reason))
                }
                (None, Some(error)) => {
                    backend_failures += 1;
                    ("error", String::new(), Some(error.clone()))
                }
                (None, None) => ("error", String::new(), Some("no outcome recorded".into())),
            };
        rows.push(AnswerOutputRow {
            question_id: record.question_id.clone(),
            predicted: decision.and_then(|d| d.predicted.label()),
            raw: record.raw_completion.clone(),
            action: decision.map(|d| match d.action {
                RouteAction::AnswerConceptual => "answer_conceptual",
                RouteAction::AnswerContextual { .. } => "answer_contextual",
                RouteAction::Ignore => "ignore",
            }),
            fallback_applied: decision.is_some_and(|d| d.fallback_applied),
            status,
            model_answer,
            reason,
        });
    }

    let out_dir = ensure_out_dir(config)?;
    write_jsonl(&out_dir.join("answers.jsonl"), &rows)?;
    let answered = rows.iter().filter(|r| r.status == "answered").count();
    let needs_context = rows.iter().filter(|r| r.status == "needs_context").count();
    let ignored = rows.iter().filter(|r| r.status == "ignored").count();
    println!(
        "{} answered, {} needs context, {} ignored, {} errors",
        answered, needs_context, ignored, backend_failures
    );
    eprintln!("wrote {}", out_dir.join("answers.jsonl").display());
    if backend_failures > 0 {
        return Err(CliError::Backend(format!(
            "{backend_failures} question(s) failed; see answers.jsonl"
        )));
    }
    Ok(())
}

pub fn experiment(
    config: &CliConfig,
    globals: &GlobalArgs,
    spec_path: &Path,
) -> Result<(), CliError> {
    let raw = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Config(format!("spec {}: {e}", spec_path.display())))?;
    let mut spec = ExperimentSpec::from_json(&raw)?;

    // --backend/--fixture and friends override the spec file
    if globals.backend.is_some() {
        spec.backend = config.backend_mode;
    }
    if let Some(fixture) = &globals.fixture {
        spec.fixture_path = Some(fixture.clone());
    }
    if let Some(pack) = &globals.prompt_pack {
        spec.prompt_pack = pack.clone();
    }
    if let Some(parallelism) = globals.parallelism {
        spec.parallelism = parallelism;
    }
    if config.strictness == qboard_core::Strictness::Lenient {
        spec.lenient = true;
    }
    if globals.model.is_some() {
        spec.model_id = Some(config.model_id.clone());
    }
    if globals.embed_model.is_some() {
        spec.embed_model_id = Some(config.embed_model_id.clone());
    }
    spec.validate()?;

    let live = match spec.backend {
        BackendMode::Live | BackendMode::Record => Some(config.http_config()),
        BackendMode::Replay => None,
    };
    let report = run_experiment(&spec, live)?;

    let out_dir = config.out_dir.join(slug(&spec.name));
    report
        .write_to_dir(&out_dir)
        .map_err(CliError::from)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", out_dir.display());
    Ok(())
}

fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_dash = true;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
            last_dash = false;
        } else if !last_dash {
            out.push('-');
            last_dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("experiment");
    }
    out
}
