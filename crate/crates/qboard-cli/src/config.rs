//! Configuration resolution with precedence: flags > environment > config
//! file > defaults.

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use qboard_core::gateway::{build_backend, Backend, BackendMode, HttpConfig};
use qboard_core::Strictness;

use crate::GlobalArgs;

pub const API_BASE_ENV: &str = "QBOARD_API_BASE";
pub const DEFAULT_API_KEY_ENV: &str = "QBOARD_API_KEY";

#[derive(Debug)]
pub enum CliError {
    /// Exit code 1.
    Config(String),
    /// Exit code 2.
    Corpus(String),
    /// Exit code 3.
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Corpus(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Corpus(m) | CliError::Backend(m) => f.write_str(m),
        }
    }
}

impl From<qboard_core::CorpusError> for CliError {
    fn from(e: qboard_core::CorpusError) -> Self {
        CliError::Corpus(e.to_string())
    }
}

impl From<qboard_core::PromptError> for CliError {
    fn from(e: qboard_core::PromptError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<qboard_core::ExperimentError> for CliError {
    fn from(e: qboard_core::ExperimentError) -> Self {
        use qboard_core::ExperimentError as E;
        match &e {
            E::Spec { .. } | E::WrongAxis { .. } | E::Prompt(_) | E::Io { .. } => {
                CliError::Config(e.to_string())
            }
            E::Corpus(_) | E::NoFeedbackRecords => CliError::Corpus(e.to_string()),
            E::Gateway(_) | E::Metrics(_) | E::Router(_) => CliError::Backend(e.to_string()),
        }
    }
}

/// Optional JSON configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    api_base: Option<String>,
    api_key_env: Option<String>,
    model_id: Option<String>,
    embed_model_id: Option<String>,
    parallelism: Option<usize>,
    prompt_pack: Option<PathBuf>,
    backend: Option<String>,
    fixture: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub api_base: String,
    pub api_key_env: String,
    pub model_id: String,
    pub embed_model_id: String,
    pub parallelism: usize,
    pub prompt_pack: PathBuf,
    pub backend_mode: BackendMode,
    pub fixture_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub dry_run: bool,
    pub strictness: Strictness,
}

impl CliConfig {
    pub fn resolve(globals: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &globals.config {
            Some(path) => {
                let raw = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("config file {}: {e}", path.display()))
                })?;
                serde_json::from_str::<FileConfig>(&raw).map_err(|e| {
                    CliError::Config(format!("config file {}: {e}", path.display()))
                })?
            }
            None => FileConfig::default(),
        };

        let backend_str = globals
            .backend
            .clone()
            .or_else(|| std::env::var("QBOARD_BACKEND").ok())
            .or(file.backend)
            .unwrap_or_else(|| "live".to_string());
        let backend_mode: BackendMode = backend_str.parse().map_err(CliError::Config)?;

        let config = CliConfig {
            api_base: globals
                .api_base
                .clone()
                .or_else(|| std::env::var(API_BASE_ENV).ok())
                .or(file.api_base)
                .unwrap_or_else(|| "https://api.openai.com".to_string()),
            api_key_env: file
                .api_key_env
                .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string()),
            model_id: globals
                .model
                .clone()
                .or(file.model_id)
                .unwrap_or_else(|| "gpt-3.5-turbo-instruct".to_string()),
            embed_model_id: globals
                .embed_model
                .clone()
                .or(file.embed_model_id)
                .unwrap_or_else(|| "text-embedding-3-small".to_string()),
            parallelism: globals.parallelism.or(file.parallelism).unwrap_or(4),
            prompt_pack: globals
                .prompt_pack
                .clone()
                .or(file.prompt_pack)
                .unwrap_or_else(|| PathBuf::from("assets/prompt_pack")),
            backend_mode,
            fixture_path: globals.fixture.clone().or(file.fixture),
            out_dir: globals
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("qboard-out")),
            dry_run: globals.dry_run,
            strictness: if globals.lenient {
                Strictness::Lenient
            } else {
                Strictness::Strict
            },
        };

        if config.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        if matches!(config.backend_mode, BackendMode::Replay | BackendMode::Record)
            && config.fixture_path.is_none()
        {
            return Err(CliError::Config(format!(
                "--backend {} requires --fixture <path>",
                config.backend_mode.label()
            )));
        }
        Ok(config)
    }

    pub fn http_config(&self) -> HttpConfig {
        let mut http = HttpConfig::new(&self.api_base, &self.model_id)
            .with_embed_model(&self.embed_model_id);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            if !key.is_empty() {
                http = http.with_api_key(key);
            }
        }
        http
    }

    /// Backend construction failures are setup problems, not runtime backend
    /// failures, so they exit 1.
    pub fn backend(&self) -> Result<Box<dyn Backend>, CliError> {
        build_backend(
            self.backend_mode,
            self.fixture_path.as_deref(),
            Some(self.http_config()),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }
}
