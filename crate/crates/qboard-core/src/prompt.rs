//! Deterministic prompt construction: the few-shot classification prompt
//! (task-description variants x label schemes x example counts) and the
//! answer prompt, plus label parsing for model completions.
//!
//! Builders are byte-deterministic: the same config and question always
//! produce the same string.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Question, QuestionType};

/// Mapping from question types to the display strings the model is asked to
/// emit. Must be injective after normalization so parsing stays unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    name: String,
    display: [String; 4],
}

impl LabelScheme {
    pub fn new(name: impl Into<String>, display: [String; 4]) -> Result<Self, PromptError> {
        let name = name.into();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, d) in display.iter().enumerate() {
            let normalized = normalize_label(d);
            if normalized.is_empty() {
                return Err(PromptError::EmptyDisplayString {
                    scheme: name,
                    index: i,
                });
            }
            if seen.insert(normalized, i).is_some() {
                return Err(PromptError::NonInjectiveScheme {
                    scheme: name,
                    display: d.clone(),
                });
            }
        }
        Ok(Self { name, display })
    }

    pub fn canonical() -> Self {
        Self::builtin("canonical").expect("built-in scheme")
    }

    /// The four built-in schemes by name.
    pub fn builtin(name: &str) -> Option<Self> {
        let display = match name {
            "canonical" => ["conceptual", "homework", "logistics", "not answerable"],
            "letters" => ["a", "b", "c", "d"],
            "context_based" => [
                "directly answerable",
                "needs course material",
                "needs administrative material",
                "not answerable",
            ],
            "hybrid" => [
                "conceptual",
                "needs course material",
                "needs administrative material",
                "not answerable",
            ],
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            display: display.map(str::to_string),
        })
    }

    pub const BUILTIN_NAMES: [&'static str; 4] =
        ["canonical", "letters", "context_based", "hybrid"];

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn display(&self, t: QuestionType) -> &str {
        &self.display[t.index()]
    }
}

/// Named collection of label schemes: the built-ins plus whatever a prompt
/// pack registers.
#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<String, LabelScheme>,
}

impl SchemeRegistry {
    pub fn builtins() -> Self {
        let mut schemes = BTreeMap::new();
        for name in LabelScheme::BUILTIN_NAMES {
            schemes.insert(name.to_string(), LabelScheme::builtin(name).unwrap());
        }
        Self { schemes }
    }

    pub fn insert(&mut self, scheme: LabelScheme) {
        self.schemes.insert(scheme.name.clone(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<&LabelScheme, PromptError> {
        self.schemes.get(name).ok_or_else(|| PromptError::UnknownScheme {
            name: name.to_string(),
            registered: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.schemes.keys().cloned().collect()
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::builtins()
    }
}

/// How much of the task description heads the classification prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDescriptionVariant {
    /// The full description, verbatim.
    Full,
    /// No task-description header at all.
    #[serde(rename = "none")]
    Omitted,
    /// Only the description's first sentence.
    FirstSentenceOnly,
    /// The full description with one extra sentence appended.
    FullPlusRule(String),
}

impl TaskDescriptionVariant {
    pub fn label(&self) -> &'static str {
        match self {
            TaskDescriptionVariant::Full => "full",
            TaskDescriptionVariant::Omitted => "none",
            TaskDescriptionVariant::FirstSentenceOnly => "first_sentence_only",
            TaskDescriptionVariant::FullPlusRule(_) => "full_plus_rule",
        }
    }
}

/// One worked question/label pair embedded in the classification prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "text")]
    pub question_text: String,
    pub label: QuestionType,
}

/// How the subset of `example_count` examples is drawn from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleSelection {
    /// The ordered prefix of the pool; the default, and what keeps runs
    /// reproducible.
    PoolPrefix,
    /// Deterministic shuffle of the pool before taking the prefix.
    SeededShuffle(u64),
}

#[derive(Debug, Clone)]
pub struct ClassificationPromptConfig {
    pub variant: TaskDescriptionVariant,
    pub scheme: LabelScheme,
    /// Task-description body, without the "Task Description: " prefix.
    pub description: String,
    pub example_pool: Vec<FewShotExample>,
    pub example_count: usize,
    pub selection: ExampleSelection,
}

impl ClassificationPromptConfig {
    pub fn new(
        variant: TaskDescriptionVariant,
        scheme: LabelScheme,
        description: impl Into<String>,
        example_pool: Vec<FewShotExample>,
        example_count: usize,
    ) -> Result<Self, PromptError> {
        if example_count > example_pool.len() {
            return Err(PromptError::ExampleCountExceedsPool {
                count: example_count,
                pool: example_pool.len(),
            });
        }
        for (index, ex) in example_pool.iter().enumerate() {
            if ex.question_text.trim().is_empty() {
                return Err(PromptError::EmptyExampleText { index });
            }
        }
        Ok(Self {
            variant,
            scheme,
            description: description.into(),
            example_pool,
            example_count,
            selection: ExampleSelection::PoolPrefix,
        })
    }

    pub fn with_selection(mut self, selection: ExampleSelection) -> Self {
        self.selection = selection;
        self
    }

    fn selected_examples(&self) -> Vec<&FewShotExample> {
        match self.selection {
            ExampleSelection::PoolPrefix => {
                self.example_pool.iter().take(self.example_count).collect()
            }
            ExampleSelection::SeededShuffle(seed) => {
                let mut order: Vec<usize> = (0..self.example_pool.len()).collect();
                let mut state = seed;
                for i in (1..order.len()).rev() {
                    let j = (splitmix64(&mut state) % (i as u64 + 1)) as usize;
                    order.swap(i, j);
                }
                order
                    .into_iter()
                    .take(self.example_count)
                    .map(|i| &self.example_pool[i])
                    .collect()
            }
        }
    }
}

/// Configuration for the answer prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPromptConfig {
    pub course_blurb: String,
}

impl AnswerPromptConfig {
    pub fn new(course_blurb: impl Into<String>) -> Result<Self, PromptError> {
        let course_blurb = course_blurb.into();
        if course_blurb.trim().is_empty() {
            return Err(PromptError::EmptyCourseBlurb);
        }
        Ok(Self { course_blurb })
    }
}

impl Default for AnswerPromptConfig {
    fn default() -> Self {
        Self {
            course_blurb: "an introductory machine learning course".to_string(),
        }
    }
}

/// A completion that did not match any display string of the scheme. Carries
/// the raw text so callers can log or route it; this is a value, not an
/// error type, and callers decide the fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub raw: String,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "completion {:?} matches no label", self.raw)
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("example_count {count} exceeds the pool size {pool}")]
    ExampleCountExceedsPool { count: usize, pool: usize },
    #[error("few-shot example {index} has empty question text")]
    EmptyExampleText { index: usize },
    #[error("scheme \"{scheme}\": display string {index} is empty")]
    EmptyDisplayString { scheme: String, index: usize },
    #[error("scheme \"{scheme}\": display string \"{display}\" collides with another type")]
    NonInjectiveScheme { scheme: String, display: String },
    #[error("unknown scheme \"{name}\"; registered schemes: {registered}")]
    UnknownScheme { name: String, registered: String },
    #[error("course blurb is empty")]
    EmptyCourseBlurb,
    #[error("task description is empty but the variant requires one")]
    EmptyDescription,
    #[error("prompt pack {path}: {source}")]
    PackIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prompt pack {path}: {message}")]
    PackParse { path: String, message: String },
}

/// Assemble the classification prompt:
/// an optional `Task Description: <desc>\n\n` header (label names inside the
/// description are rewritten through the scheme), then each selected example
/// as `Question: <q>\nClassification: <label>\n\n`, then the bare trailer
/// `Question: <text>\nClassification:`.
pub fn build_classification_prompt(
    config: &ClassificationPromptConfig,
    question: &Question,
) -> Result<String, PromptError> {
    if config.example_count > config.example_pool.len() {
        return Err(PromptError::ExampleCountExceedsPool {
            count: config.example_count,
            pool: config.example_pool.len(),
        });
    }

    let mut out = String::new();
    let description = match &config.variant {
        TaskDescriptionVariant::Omitted => None,
        TaskDescriptionVariant::Full => Some(config.description.trim_end().to_string()),
        TaskDescriptionVariant::FirstSentenceOnly => {
            Some(first_sentence(&config.description).to_string())
        }
        TaskDescriptionVariant::FullPlusRule(rule) => {
            Some(format!("{} {}", config.description.trim_end(), rule.trim()))
        }
    };
    if let Some(desc) = description {
        if desc.trim().is_empty() {
            return Err(PromptError::EmptyDescription);
        }
        out.push_str("Task Description: ");
        out.push_str(&rewrite_labels(&desc, &config.scheme));
        out.push_str("\n\n");
    }
    for example in config.selected_examples() {
        out.push_str("Question: ");
        out.push_str(&example.question_text);
        out.push_str("\nClassification: ");
        out.push_str(config.scheme.display(example.label));
        out.push_str("\n\n");
    }
    out.push_str("Question: ");
    out.push_str(&question.text);
    out.push_str("\nClassification:");
    Ok(out)
}

/// The answer prompt, exactly:
/// `Task: Answer the following question that was posted by a student on the
/// class discussion board for <course_blurb>. Your answer should be truthful,
/// concise and helpful to the student.\n\nQuestion: <text>\n\nAnswer:`
pub fn build_answer_prompt(config: &AnswerPromptConfig, question: &Question) -> String {
    format!(
        "Task: Answer the following question that was posted by a student on the class \
         discussion board for {}. Your answer should be truthful, concise and helpful to \
         the student.\n\nQuestion: {}\n\nAnswer:",
        config.course_blurb, question.text
    )
}

/// Decode a completion into a question type: trim, lowercase, strip trailing
/// punctuation, then require an exact match against the scheme's display
/// strings (normalized the same way).
pub fn parse_classification(
    raw_completion: &str,
    scheme: &LabelScheme,
) -> Result<QuestionType, ParseFailure> {
    let normalized = normalize_label(raw_completion);
    for t in QuestionType::ALL {
        if normalize_label(scheme.display(t)) == normalized {
            return Ok(t);
        }
    }
    Err(ParseFailure {
        raw: raw_completion.to_string(),
    })
}

fn normalize_label(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

/// First sentence of a description: everything up to and including the first
/// '.', '!' or '?' that is followed by whitespace or the end of the text.
pub fn first_sentence(text: &str) -> &str {
    let trimmed = text.trim_end();
    for (i, c) in trimmed.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let rest = &trimmed[i + c.len_utf8()..];
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return &trimmed[..i + c.len_utf8()];
            }
        }
    }
    trimmed
}

// Replace quoted canonical label names with the scheme's display strings in a
// single pass, so a scheme that permutes the canonical names cannot cascade.
fn rewrite_labels(text: &str, scheme: &LabelScheme) -> String {
    let mut patterns: Vec<(String, String)> = QuestionType::ALL
        .iter()
        .map(|&t| {
            (
                format!("\"{}\"", t.label()),
                format!("\"{}\"", scheme.display(t)),
            )
        })
        .collect();
    patterns.sort_by_key(|(pattern, _)| std::cmp::Reverse(pattern.len()));

    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'scan: while !rest.is_empty() {
        for (pattern, replacement) in &patterns {
            if rest.starts_with(pattern.as_str()) {
                out.push_str(replacement);
                rest = &rest[pattern.len()..];
                continue 'scan;
            }
        }
        let c = rest.chars().next().unwrap();
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// On-disk prompt pack: `task_description.txt`, `examples.jsonl`
/// (fields: text, label) and `schemes.json` (name -> four display strings in
/// label order).
#[derive(Debug, Clone)]
pub struct PromptPack {
    pub task_description: String,
    pub example_pool: Vec<FewShotExample>,
    pub schemes: SchemeRegistry,
}

impl PromptPack {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| PromptError::PackIo { path, source }
        };

        let desc_path = dir.join("task_description.txt");
        let task_description = fs::read_to_string(&desc_path)
            .map_err(io_err(&desc_path))?
            .trim_end()
            .to_string();
        if task_description.is_empty() {
            return Err(PromptError::PackParse {
                path: desc_path.display().to_string(),
                message: "task description is empty".into(),
            });
        }

        let examples_path = dir.join("examples.jsonl");
        let raw = fs::read_to_string(&examples_path).map_err(io_err(&examples_path))?;
        let mut example_pool = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let example: FewShotExample =
                serde_json::from_str(line).map_err(|e| PromptError::PackParse {
                    path: examples_path.display().to_string(),
                    message: format!("line {}: {}", idx + 1, e),
                })?;
            if example.question_text.trim().is_empty() {
                return Err(PromptError::PackParse {
                    path: examples_path.display().to_string(),
                    message: format!("line {}: empty question text", idx + 1),
                });
            }
            example_pool.push(example);
        }

        let mut schemes = SchemeRegistry::builtins();
        let schemes_path = dir.join("schemes.json");
        if schemes_path.exists() {
            let raw = fs::read_to_string(&schemes_path).map_err(io_err(&schemes_path))?;
            let parsed: BTreeMap<String, Vec<String>> =
                serde_json::from_str(&raw).map_err(|e| PromptError::PackParse {
                    path: schemes_path.display().to_string(),
                    message: e.to_string(),
                })?;
            for (name, display) in parsed {
                let display: [String; 4] =
                    display.try_into().map_err(|bad: Vec<String>| PromptError::PackParse {
                        path: schemes_path.display().to_string(),
                        message: format!(
                            "scheme \"{}\" must list exactly 4 display strings, got {}",
                            name,
                            bad.len()
                        ),
                    })?;
                schemes.insert(LabelScheme::new(name, display)?);
            }
        }

        Ok(Self {
            task_description,
            example_pool,
            schemes,
        })
    }

    /// Classification config over this pack's description and pool.
    pub fn classification_config(
        &self,
        variant: TaskDescriptionVariant,
        scheme_name: &str,
        example_count: usize,
    ) -> Result<ClassificationPromptConfig, PromptError> {
        let scheme = self.schemes.get(scheme_name)?.clone();
        ClassificationPromptConfig::new(
            variant,
            scheme,
            self.task_description.clone(),
            self.example_pool.clone(),
            example_count,
        )
    }
}
