//! Experiment specification: what corpus, what prompt pack, which backend,
//! and the axis being varied.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::QuestionType;
use crate::gateway::BackendMode;
use crate::prompt::TaskDescriptionVariant;

use super::ExperimentError;

/// The varied dimension of one experiment. Each axis value becomes one
/// report cell over the same question set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentAxis {
    /// Classification accuracy by few-shot example count.
    FewShotSweep { counts: Vec<usize> },
    /// Classification accuracy by task-description variant.
    DescriptionVariants { variants: Vec<TaskDescriptionVariant> },
    /// Classification accuracy by label scheme.
    LabelSchemes { schemes: Vec<String> },
    /// Answer similarity versus the instructor answer, one cell per type.
    AnswerEval {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        types: Option<Vec<QuestionType>>,
    },
    /// Answer similarity split by instructor feedback (good/bad).
    FeedbackSplit,
}

impl ExperimentAxis {
    pub const KINDS: [&'static str; 5] = [
        "few_shot_sweep",
        "description_variants",
        "label_schemes",
        "answer_eval",
        "feedback_split",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentAxis::FewShotSweep { .. } => "few_shot_sweep",
            ExperimentAxis::DescriptionVariants { .. } => "description_variants",
            ExperimentAxis::LabelSchemes { .. } => "label_schemes",
            ExperimentAxis::AnswerEval { .. } => "answer_eval",
            ExperimentAxis::FeedbackSplit => "feedback_split",
        }
    }
}

/// The non-varied prompt dimensions: which variant/scheme/example count the
/// cells share unless the axis overrides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    #[serde(default = "default_variant")]
    pub variant: TaskDescriptionVariant,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    /// None means the whole example pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_count: Option<usize>,
}

fn default_variant() -> TaskDescriptionVariant {
    TaskDescriptionVariant::Full
}

fn default_scheme() -> String {
    "canonical".to_string()
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            scheme: default_scheme(),
            example_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub corpus_path: PathBuf,
    pub prompt_pack: PathBuf,
    pub backend: BackendMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    pub axis: ExperimentAxis,
    #[serde(default)]
    pub base: BaseConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Ignore unknown keys when loading the corpus.
    #[serde(default)]
    pub lenient: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_model_id: Option<String>,
}

fn default_parallelism() -> usize {
    4
}

impl ExperimentSpec {
    pub fn from_json(json: &str) -> Result<Self, ExperimentError> {
        let spec: ExperimentSpec =
            serde_json::from_str(json).map_err(|e| ExperimentError::Spec {
                message: e.to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let spec_err = |message: String| Err(ExperimentError::Spec { message });
        if self.name.trim().is_empty() {
            return spec_err("name must be nonempty".into());
        }
        if self.parallelism == 0 {
            return spec_err("parallelism must be at least 1".into());
        }
        if matches!(self.backend, BackendMode::Replay | BackendMode::Record)
            && self.fixture_path.is_none()
        {
            return spec_err(format!(
                "fixture_path is required for the {} backend",
                self.backend.label()
            ));
        }
        match &self.axis {
            ExperimentAxis::FewShotSweep { counts } => {
                if counts.is_empty() {
                    return spec_err("axis.few_shot_sweep.counts must list at least one count".into());
                }
            }
            ExperimentAxis::DescriptionVariants { variants } => {
                if variants.is_empty() {
                    return spec_err(
                        "axis.description_variants.variants must list at least one variant".into(),
                    );
                }
            }
            ExperimentAxis::LabelSchemes { schemes } => {
                if schemes.is_empty() {
                    return spec_err("axis.label_schemes.schemes must list at least one scheme".into());
                }
            }
            ExperimentAxis::AnswerEval { types: Some(types) } if types.is_empty() => {
                return spec_err("axis.answer_eval.types must not be an empty list".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Counts that must fit the example pool, including the base count.
    pub fn required_counts(&self) -> Vec<usize> {
        let mut counts = Vec::new();
        if let Some(base) = self.base.example_count {
            counts.push(base);
        }
        if let ExperimentAxis::FewShotSweep { counts: axis } = &self.axis {
            counts.extend(axis.iter().copied());
        }
        counts
    }
}
