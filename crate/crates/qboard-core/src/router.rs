//! The triage pipeline: classify a question, route it by predicted type, and
//! answer it with the type-appropriate strategy or leave it alone.
//!
//! Routing is total over the five possible predictions: the four types plus
//! an unparseable completion, which falls back to Ignore — guessing a type
//! risks answering a question the staff should handle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Question, QuestionType};
use crate::gateway::{run_parallel, Backend, Completion, CompletionRequest, GatewayError};
use crate::prompt::{
    build_answer_prompt, build_classification_prompt, parse_classification, AnswerPromptConfig,
    ClassificationPromptConfig, ParseFailure, PromptError,
};

/// Classification sampling profile: deterministic, and a label fits in a few
/// tokens.
pub const CLASSIFY_TEMPERATURE: f64 = 0.0;
pub const CLASSIFY_MAX_TOKENS: u32 = 8;

/// Answer sampling profile.
pub const ANSWER_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_ANSWER_MAX_TOKENS: u32 = 256;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend returned an empty answer for question \"{question_id}\"")]
    EmptyAnswer { question_id: String },
}

/// What the classifier said about a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicted {
    Label(QuestionType),
    Failed(ParseFailure),
}

impl From<Result<QuestionType, ParseFailure>> for Predicted {
    fn from(r: Result<QuestionType, ParseFailure>) -> Self {
        match r {
            Ok(t) => Predicted::Label(t),
            Err(f) => Predicted::Failed(f),
        }
    }
}

impl Predicted {
    pub fn label(&self) -> Option<QuestionType> {
        match self {
            Predicted::Label(t) => Some(*t),
            Predicted::Failed(_) => None,
        }
    }
}

/// The strategy chosen for a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteAction {
    AnswerConceptual,
    AnswerContextual { context_docs: Vec<String> },
    Ignore,
}

impl RouteAction {
    pub fn label(&self) -> &'static str {
        match self {
            RouteAction::AnswerConceptual => "answer_conceptual",
            RouteAction::AnswerContextual { .. } => "answer_contextual",
            RouteAction::Ignore => "ignore",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub question_id: String,
    pub predicted: Predicted,
    pub action: RouteAction,
    /// True when an unparseable completion forced the Ignore default.
    pub fallback_applied: bool,
}

/// Supplies course documents for contextual answering. Retrieval itself is
/// out of scope; implementations just hand over whatever they have.
pub trait ContextProvider: Send + Sync {
    fn context_for(&self, question: &Question) -> Vec<String>;
}

/// The same fixed documents for every question.
pub struct StaticContext(pub Vec<String>);

impl ContextProvider for StaticContext {
    fn context_for(&self, _question: &Question) -> Vec<String> {
        self.0.clone()
    }
}

/// The completion request a classification prompt is sent with. Public so
/// fixture tooling can reproduce the exact request fingerprint.
pub fn classification_request(prompt: String) -> CompletionRequest {
    CompletionRequest::new(prompt)
        .with_temperature(CLASSIFY_TEMPERATURE)
        .with_max_tokens(CLASSIFY_MAX_TOKENS)
        .with_stop(vec!["\n".to_string()])
}

/// The completion request an answer prompt is sent with.
pub fn answer_request(prompt: String, max_tokens: u32) -> CompletionRequest {
    CompletionRequest::new(prompt)
        .with_temperature(ANSWER_TEMPERATURE)
        .with_max_tokens(max_tokens)
}

/// Build the classification prompt, ask the backend, and parse the label.
/// Returns the parse outcome together with the raw completion.
pub fn classify(
    question: &Question,
    config: &ClassificationPromptConfig,
    backend: &dyn Backend,
) -> Result<(Result<QuestionType, ParseFailure>, Completion), RouterError> {
    let prompt = build_classification_prompt(config, question)?;
    let completion = backend.complete(&classification_request(prompt))?;
    let parsed = parse_classification(&completion.text, &config.scheme);
    Ok((parsed, completion))
}

/// Map a prediction onto an action: conceptual questions get the
/// general-knowledge prompt, homework/logistics get the contextual prompt,
/// not-answerable questions are ignored, and parse failures are ignored with
/// the fallback flag set.
pub fn route(
    question: &Question,
    predicted: Predicted,
    context_provider: Option<&dyn ContextProvider>,
) -> RoutingDecision {
    let (action, fallback_applied) = match &predicted {
        Predicted::Label(QuestionType::Conceptual) => (RouteAction::AnswerConceptual, false),
        Predicted::Label(QuestionType::Homework) | Predicted::Label(QuestionType::Logistics) => {
            let context_docs = context_provider
                .map(|p| p.context_for(question))
                .unwrap_or_default();
            (RouteAction::AnswerContextual { context_docs }, false)
        }
        Predicted::Label(QuestionType::NotAnswerable) => (RouteAction::Ignore, false),
        Predicted::Failed(_) => (RouteAction::Ignore, true),
    };
    RoutingDecision {
        question_id: question.id.clone(),
        predicted,
        action,
        fallback_applied,
    }
}

/// Answer a conceptual question: the answer prompt at temperature 0.7, no
/// stop sequences (generation runs to the model's end-of-text).
pub fn answer_conceptual(
    question: &Question,
    config: &AnswerPromptConfig,
    max_tokens: u32,
    backend: &dyn Backend,
) -> Result<String, RouterError> {
    let prompt = build_answer_prompt(config, question);
    let completion = backend.complete(&answer_request(prompt, max_tokens))?;
    let answer = completion.text.trim().to_string();
    if answer.is_empty() {
        return Err(RouterError::EmptyAnswer {
            question_id: question.id.clone(),
        });
    }
    Ok(answer)
}

/// Outcome of contextual answering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextualAnswer {
    Answered(String),
    /// No documents were supplied, so no backend call was made.
    NeedsContext,
}

/// The answer-prompt shape with a `Context:` block of the supplied documents
/// ahead of the question.
pub fn contextual_answer_prompt(
    config: &AnswerPromptConfig,
    context_docs: &[String],
    question: &Question,
) -> String {
    format!(
        "Task: Answer the following question that was posted by a student on the class \
         discussion board for {}. Your answer should be truthful, concise and helpful to \
         the student.\n\nContext: {}\n\nQuestion: {}\n\nAnswer:",
        config.course_blurb,
        context_docs.join("\n"),
        question.text
    )
}

/// Answer a homework/logistics question from supplied documents. With no
/// documents this returns `NeedsContext` without touching the backend.
pub fn answer_contextual(
    question: &Question,
    config: &AnswerPromptConfig,
    context_docs: &[String],
    max_tokens: u32,
    backend: &dyn Backend,
) -> Result<ContextualAnswer, RouterError> {
    if context_docs.is_empty() {
        return Ok(ContextualAnswer::NeedsContext);
    }
    let prompt = contextual_answer_prompt(config, context_docs, question);
    let completion = backend.complete(&answer_request(prompt, max_tokens))?;
    let answer = completion.text.trim().to_string();
    if answer.is_empty() {
        return Err(RouterError::EmptyAnswer {
            question_id: question.id.clone(),
        });
    }
    Ok(ContextualAnswer::Answered(answer))
}

/// What happened to a routed question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerOutcome {
    Answered(String),
    NeedsContext,
    Ignored,
}

/// Per-question result of a pipeline run. `error` is set (and the rest
/// partial) when this question's calls failed; other questions are never
/// affected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineRecord {
    pub question_id: String,
    pub raw_completion: Option<String>,
    pub decision: Option<RoutingDecision>,
    pub outcome: Option<AnswerOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub classification: ClassificationPromptConfig,
    pub answer: AnswerPromptConfig,
    pub answer_max_tokens: u32,
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(classification: ClassificationPromptConfig) -> Self {
        Self {
            classification,
            answer: AnswerPromptConfig::default(),
            answer_max_tokens: DEFAULT_ANSWER_MAX_TOKENS,
            parallelism: 1,
        }
    }
}

/// Classify, route, and answer every question. Per-question failures are
/// recorded in that question's record; the batch always completes. Results
/// are in input order, and a question routed Ignore never reaches an answer
/// call.
pub fn run_pipeline(
    questions: &[Question],
    config: &PipelineConfig,
    context_provider: Option<&dyn ContextProvider>,
    backend: &dyn Backend,
) -> Vec<PipelineRecord> {
    run_parallel(questions, config.parallelism, |_, question| {
        run_one(question, config, context_provider, backend)
    })
}

fn run_one(
    question: &Question,
    config: &PipelineConfig,
    context_provider: Option<&dyn ContextProvider>,
    backend: &dyn Backend,
) -> PipelineRecord {
    let mut record = PipelineRecord {
        question_id: question.id.clone(),
        raw_completion: None,
        decision: None,
        outcome: None,
        error: None,
    };
    let (parsed, completion) = match classify(question, &config.classification, backend) {
        Ok(ok) => ok,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.raw_completion = Some(completion.text.clone());
    let decision = route(question, parsed.into(), context_provider);
    let outcome = match &decision.action {
        RouteAction::Ignore => Ok(AnswerOutcome::Ignored),
        RouteAction::AnswerConceptual => {
            answer_conceptual(question, &config.answer, config.answer_max_tokens, backend)
                .map(AnswerOutcome::Answered)
        }
        RouteAction::AnswerContextual { context_docs } => answer_contextual(
            question,
            &config.answer,
            context_docs,
            config.answer_max_tokens,
            backend,
        )
        .map(|r| match r {
            ContextualAnswer::Answered(text) => AnswerOutcome::Answered(text),
            ContextualAnswer::NeedsContext => AnswerOutcome::NeedsContext,
        }),
    };
    record.decision = Some(decision);
    match outcome {
        Ok(o) => record.outcome = Some(o),
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FixtureEntry, FixtureStore, ReplayBackend};
    use crate::prompt::{FewShotExample, LabelScheme, TaskDescriptionVariant};

    fn question(id: &str, text: &str) -> Question {
        Question {
            id: id.into(),
            text: text.into(),
            offering: "F22".into(),
            meta: Default::default(),
        }
    }

    fn prompt_config() -> ClassificationPromptConfig {
        ClassificationPromptConfig::new(
            TaskDescriptionVariant::Full,
            LabelScheme::canonical(),
            "Classify each question as \"conceptual\", \"homework\", \"logistics\" or \"not answerable\".",
            vec![FewShotExample {
                question_text: "Why does my loss diverge?".into(),
                label: QuestionType::Conceptual,
            }],
            1,
        )
        .unwrap()
    }

    fn classification_fixture(
        store: &mut FixtureStore,
        config: &ClassificationPromptConfig,
        q: &Question,
        reply: &str,
    ) {
        let prompt = build_classification_prompt(config, q).unwrap();
        store.insert(FixtureEntry::for_request(&classification_request(prompt), reply));
    }

    fn answer_fixture(store: &mut FixtureStore, q: &Question, reply: &str) {
        let prompt = build_answer_prompt(&AnswerPromptConfig::default(), q);
        let request = CompletionRequest::new(prompt)
            .with_temperature(ANSWER_TEMPERATURE)
            .with_max_tokens(DEFAULT_ANSWER_MAX_TOKENS);
        store.insert(FixtureEntry::for_request(&request, reply));
    }

    #[test]
    fn classify_parses_fixture_labels() {
        let config = prompt_config();
        let q1 = question("q1", "Which room is the midterm in?");
        let q2 = question("q2", "How do we choose the learning rate?");
        let q3 = question("q3", "Anyone?");
        let mut store = FixtureStore::new();
        classification_fixture(&mut store, &config, &q1, "logistics");
        classification_fixture(&mut store, &config, &q2, "conceptual");
        classification_fixture(&mut store, &config, &q3, "idk");
        let backend = ReplayBackend::from_store(store);

        let (parsed, _) = classify(&q1, &config, &backend).unwrap();
        assert_eq!(parsed, Ok(QuestionType::Logistics));
        let (parsed, _) = classify(&q2, &config, &backend).unwrap();
        assert_eq!(parsed, Ok(QuestionType::Conceptual));
        let (parsed, raw) = classify(&q3, &config, &backend).unwrap();
        assert_eq!(parsed, Err(ParseFailure { raw: "idk".into() }));
        assert_eq!(raw.text, "idk");
    }

    #[test]
    fn routing_is_total_over_all_five_cases() {
        let q = question("q", "text");
        let cases: Vec<(Predicted, RouteAction, bool)> = vec![
            (
                Predicted::Label(QuestionType::Conceptual),
                RouteAction::AnswerConceptual,
                false,
            ),
            (
                Predicted::Label(QuestionType::Homework),
                RouteAction::AnswerContextual { context_docs: vec![] },
                false,
            ),
            (
                Predicted::Label(QuestionType::Logistics),
                RouteAction::AnswerContextual { context_docs: vec![] },
                false,
            ),
            (
                Predicted::Label(QuestionType::NotAnswerable),
                RouteAction::Ignore,
                false,
            ),
            (
                Predicted::Failed(ParseFailure { raw: "??".into() }),
                RouteAction::Ignore,
                true,
            ),
        ];
        for (predicted, action, fallback) in cases {
            let decision = route(&q, predicted.clone(), None);
            assert_eq!(decision.action, action, "{predicted:?}");
            assert_eq!(decision.fallback_applied, fallback, "{predicted:?}");
        }
    }

    #[test]
    fn route_carries_provider_documents() {
        let q = question("q", "What is the late policy?");
        let provider = StaticContext(vec!["Late days: 3".into()]);
        let decision = route(&q, Predicted::Label(QuestionType::Logistics), Some(&provider));
        assert_eq!(
            decision.action,
            RouteAction::AnswerContextual {
                context_docs: vec!["Late days: 3".into()]
            }
        );
    }

    #[test]
    fn contextual_prompt_places_context_before_question() {
        let q = question("q", "Which room?");
        let prompt = contextual_answer_prompt(
            &AnswerPromptConfig::default(),
            &["Syllabus: exams in EX200".to_string()],
            &q,
        );
        let context_at = prompt.find("Context:").unwrap();
        let question_at = prompt.find("Question:").unwrap();
        assert!(context_at < question_at);
        assert!(prompt.ends_with("\n\nAnswer:"));
    }

    #[test]
    fn contextual_without_documents_never_calls_backend() {
        // an empty replay store errors on any call, so success proves no call
        let backend = ReplayBackend::from_store(FixtureStore::new());
        let q = question("q", "What does z mean in Lab 1?");
        let result =
            answer_contextual(&q, &AnswerPromptConfig::default(), &[], 256, &backend).unwrap();
        assert_eq!(result, ContextualAnswer::NeedsContext);
    }

    #[test]
    fn empty_completion_is_flagged_not_stored() {
        let q = question("q", "What is overfitting?");
        let mut store = FixtureStore::new();
        answer_fixture(&mut store, &q, "   ");
        let backend = ReplayBackend::from_store(store);
        let err =
            answer_conceptual(&q, &AnswerPromptConfig::default(), 256, &backend).unwrap_err();
        assert!(matches!(err, RouterError::EmptyAnswer { .. }));
    }

    #[test]
    fn pipeline_routes_each_type_and_isolates_failures() {
        let config = prompt_config();
        let questions = vec![
            question("q1", "How do we choose the learning rate?"),
            question("q2", "What does z refer to in Lab 1?"),
            question("q3", "Have office hours been cancelled?"),
            question("q4", "???"),
            question("q5", "No fixture for this one"),
        ];
        let mut store = FixtureStore::new();
        classification_fixture(&mut store, &config, &questions[0], "conceptual");
        classification_fixture(&mut store, &config, &questions[1], "homework");
        classification_fixture(&mut store, &config, &questions[2], "not answerable");
        classification_fixture(&mut store, &config, &questions[3], "gibberish");
        answer_fixture(&mut store, &questions[0], "Use a validation set.");
        let backend = ReplayBackend::from_store(store);

        let pipeline_config = PipelineConfig::new(config);
        let records = run_pipeline(&questions, &pipeline_config, None, &backend);
        assert_eq!(records.len(), 5);

        assert_eq!(
            records[0].outcome,
            Some(AnswerOutcome::Answered("Use a validation set.".into()))
        );
        assert_eq!(records[1].outcome, Some(AnswerOutcome::NeedsContext));
        assert_eq!(records[2].outcome, Some(AnswerOutcome::Ignored));
        let d3 = records[3].decision.as_ref().unwrap();
        assert_eq!(d3.action, RouteAction::Ignore);
        assert!(d3.fallback_applied);
        assert!(records[4].error.as_deref().unwrap().contains("fingerprint"));
        assert!(records[4].decision.is_none());
    }

    #[test]
    fn pipeline_is_deterministic_on_replay() {
        let config = prompt_config();
        let questions: Vec<Question> = (0..6)
            .map(|i| question(&format!("q{i}"), &format!("Question number {i}?")))
            .collect();
        let mut store = FixtureStore::new();
        for (i, q) in questions.iter().enumerate() {
            let label = QuestionType::ALL[i % 4].label();
            classification_fixture(&mut store, &config, q, label);
            if i % 4 == 0 {
                answer_fixture(&mut store, q, &format!("Answer {i}"));
            }
        }
        let backend = ReplayBackend::from_store(store);
        let mut pipeline_config = PipelineConfig::new(config);
        pipeline_config.parallelism = 4;
        let a = run_pipeline(&questions, &pipeline_config, None, &backend);
        let b = run_pipeline(&questions, &pipeline_config, None, &backend);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_question_list_yields_empty_output() {
        let backend = ReplayBackend::from_store(FixtureStore::new());
        let records = run_pipeline(&[], &PipelineConfig::new(prompt_config()), None, &backend);
        assert!(records.is_empty());
    }
}
