//! Triage and answer student discussion-board questions with a two-step
//! prompting pipeline (classify, then answer or ignore), plus the evaluation
//! harness used to score classification and answer quality offline.

pub mod corpus;
pub mod experiment;
pub mod gateway;
pub mod metrics;
pub mod prompt;
pub mod router;

pub use corpus::{
    corpus_summary, load_corpus, resolve_ground_truth, save_corpus, AnnotationSet, AnswerRecord,
    Corpus, CorpusError, CorpusSummary, GroundTruthLabel, HumanFeedback, Question, QuestionType,
    Resolution, Strictness,
};
pub use experiment::{run_experiment, ExperimentAxis, ExperimentError, ExperimentReport, ExperimentSpec};
pub use gateway::{
    Backend, BackendMode, Completion, CompletionRequest, EmbeddingVector, GatewayError,
    HttpConfig, TokenLogprob,
};
pub use metrics::{RougeScore, RougeTriple, SimilarityReport};
pub use prompt::{
    AnswerPromptConfig, ClassificationPromptConfig, FewShotExample, LabelScheme, ParseFailure,
    PromptError, PromptPack, TaskDescriptionVariant,
};
pub use router::{Predicted, RouteAction, RoutingDecision};
