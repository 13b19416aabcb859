//! Backend abstraction over text-completion and embedding providers: a live
//! HTTP client for OpenAI-compatible completion APIs and a replay backend
//! that answers from recorded fixtures, keyed by a stable request
//! fingerprint. Completions carry per-token logprobs so perplexity can be
//! scored downstream.

mod fixture;
mod http;

pub use fixture::{
    record_fixture, CompletionFixture, EmbeddingFixture, FixtureEntry, FixtureKind,
    FixturePayload, FixtureStore, RecordingBackend, ReplayBackend,
};
pub use http::{HttpBackend, HttpConfig};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A completion request. `echo_score_target` switches the call into scoring
/// mode: the backend returns the logprobs of exactly that continuation given
/// the prompt and samples nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub want_logprobs: bool,
    pub echo_score_target: Option<String>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 16,
            stop: Vec::new(),
            want_logprobs: false,
            echo_score_target: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_logprobs(mut self) -> Self {
        self.want_logprobs = true;
        self
    }

    /// Score `target` as the continuation instead of sampling; implies
    /// `want_logprobs`.
    pub fn echo_scoring(mut self, target: impl Into<String>) -> Self {
        self.echo_score_target = Some(target.into());
        self.want_logprobs = true;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.echo_score_target.is_some() && !self.want_logprobs {
            return Err(GatewayError::InvalidRequest {
                message: "echo_score_target requires want_logprobs".into(),
            });
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest {
                message: "max_tokens must be positive".into(),
            });
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest {
                message: format!("temperature {} is not a finite non-negative value", self.temperature),
            });
        }
        Ok(())
    }
}

/// One token of model output with its natural-log probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
    pub model_id: String,
    #[serde(default)]
    pub usage: Usage,
}

impl Completion {
    pub fn logprob_sum(&self) -> Option<f64> {
        self.token_logprobs
            .as_ref()
            .map(|lps| lps.iter().map(|t| t.logprob).sum())
    }

    pub fn logprob_values(&self) -> Option<Vec<f64>> {
        self.token_logprobs
            .as_ref()
            .map(|lps| lps.iter().map(|t| t.logprob).collect())
    }

    /// Logprobs must all be <= 0; anything else is a malformed response.
    pub(crate) fn check_logprobs(&self) -> Result<(), GatewayError> {
        if let Some(lps) = &self.token_logprobs {
            for t in lps {
                if t.logprob > 0.0 {
                    return Err(GatewayError::InvalidResponse {
                        message: format!("token {:?} has positive logprob {}", t.token, t.logprob),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A dense embedding. The dimension is the vector length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Backend mode selector shared by the CLI and the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    Replay,
    Record,
}

impl BackendMode {
    pub fn label(self) -> &'static str {
        match self {
            BackendMode::Live => "live",
            BackendMode::Replay => "replay",
            BackendMode::Record => "record",
        }
    }
}

impl std::str::FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendMode::Live),
            "replay" => Ok(BackendMode::Replay),
            "record" => Ok(BackendMode::Record),
            other => Err(format!("unknown backend mode \"{other}\"; expected live, replay or record")),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {excerpt}")]
    Provider { status: u16, excerpt: String },
    #[error("no {kind} fixture for fingerprint {fingerprint}")]
    FixtureMiss {
        kind: FixtureKind,
        fingerprint: String,
    },
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
    #[error("invalid response: {message}")]
    InvalidResponse { message: String },
    #[error("backend does not support this capability: {message}")]
    UnsupportedCapability { message: String },
    #[error("fixture {path}: {source}")]
    FixtureIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A completion + embedding provider. Handles are shared across threads; the
/// pipeline bounds concurrency with [`run_parallel`].
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError>;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
    /// Short identity string recorded in report provenance.
    fn describe(&self) -> String;
}

/// Stable hash of (prompt bytes, temperature, max_tokens, stop,
/// echo_score_target). Equal requests fingerprint identically across
/// processes; `want_logprobs` is deliberately excluded.
pub fn completion_fingerprint(request: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"completion\0");
    hash_str(&mut h, &request.prompt);
    h.update(request.temperature.to_bits().to_le_bytes());
    h.update(request.max_tokens.to_le_bytes());
    h.update((request.stop.len() as u64).to_le_bytes());
    for s in &request.stop {
        hash_str(&mut h, s);
    }
    match &request.echo_score_target {
        None => h.update([0u8]),
        Some(target) => {
            h.update([1u8]);
            hash_str(&mut h, target);
        }
    }
    to_hex(&h.finalize())
}

/// Stable hash of the embedded text.
pub fn embedding_fingerprint(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"embedding\0");
    hash_str(&mut h, text);
    to_hex(&h.finalize())
}

fn hash_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Construct a backend for the given mode. Replay and record modes need a
/// fixture path; live and record modes need an HTTP configuration.
pub fn build_backend(
    mode: BackendMode,
    fixture_path: Option<&std::path::Path>,
    http: Option<HttpConfig>,
) -> Result<Box<dyn Backend>, GatewayError> {
    let need_fixture = || {
        fixture_path.ok_or_else(|| GatewayError::InvalidRequest {
            message: format!("backend mode \"{}\" requires a fixture path", mode.label()),
        })
    };
    let need_http = || {
        http.clone().ok_or_else(|| GatewayError::InvalidRequest {
            message: format!("backend mode \"{}\" requires live API configuration", mode.label()),
        })
    };
    match mode {
        BackendMode::Replay => Ok(Box::new(ReplayBackend::load(need_fixture()?)?)),
        BackendMode::Live => Ok(Box::new(HttpBackend::new(need_http()?))),
        BackendMode::Record => {
            let live = HttpBackend::new(need_http()?);
            Ok(Box::new(record_fixture(Box::new(live), need_fixture()?)?))
        }
    }
}

/// Run `f` over every item with at most `parallelism` worker threads,
/// collecting results in input order.
pub fn run_parallel<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = parallelism.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(i, &items[i]);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("worker filled slot"))
        .collect()
}
