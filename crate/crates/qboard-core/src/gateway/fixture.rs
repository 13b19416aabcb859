//! Fixture store plus the replay and recording backends. Fixture files are
//! JSONL: `{"fp": str, "kind": "completion"|"embedding", "response": {...}}`.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    completion_fingerprint, embedding_fingerprint, Backend, Completion, CompletionRequest,
    EmbeddingVector, GatewayError, TokenLogprob, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixtureKind {
    Completion,
    Embedding,
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixtureKind::Completion => "completion",
            FixtureKind::Embedding => "embedding",
        })
    }
}

/// Stored completion response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionFixture {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
    #[serde(default = "fixture_model_id")]
    pub model_id: String,
    #[serde(default)]
    pub usage: Usage,
}

fn fixture_model_id() -> String {
    "fixture".to_string()
}

impl From<&Completion> for CompletionFixture {
    fn from(c: &Completion) -> Self {
        Self {
            text: c.text.clone(),
            token_logprobs: c.token_logprobs.clone(),
            model_id: c.model_id.clone(),
            usage: c.usage,
        }
    }
}

impl From<&CompletionFixture> for Completion {
    fn from(f: &CompletionFixture) -> Self {
        Self {
            text: f.text.clone(),
            token_logprobs: f.token_logprobs.clone(),
            model_id: f.model_id.clone(),
            usage: f.usage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFixture {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "response", rename_all = "lowercase")]
pub enum FixturePayload {
    Completion(CompletionFixture),
    Embedding(EmbeddingFixture),
}

impl FixturePayload {
    fn kind(&self) -> FixtureKind {
        match self {
            FixturePayload::Completion(_) => FixtureKind::Completion,
            FixturePayload::Embedding(_) => FixtureKind::Embedding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub fp: String,
    #[serde(flatten)]
    pub payload: FixturePayload,
}

impl FixtureEntry {
    pub fn completion(fp: impl Into<String>, fixture: CompletionFixture) -> Self {
        Self {
            fp: fp.into(),
            payload: FixturePayload::Completion(fixture),
        }
    }

    pub fn embedding(fp: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            fp: fp.into(),
            payload: FixturePayload::Embedding(EmbeddingFixture { values }),
        }
    }

    /// Convenience for scripting classification fixtures in tests and
    /// offline harnesses: fingerprint the request and store `text` as its
    /// canned completion.
    pub fn for_request(request: &CompletionRequest, text: impl Into<String>) -> Self {
        Self::completion(
            completion_fingerprint(request),
            CompletionFixture {
                text: text.into(),
                token_logprobs: None,
                model_id: fixture_model_id(),
                usage: Usage::default(),
            },
        )
    }

    pub fn for_embedding(text: &str, values: Vec<f64>) -> Self {
        Self::embedding(embedding_fingerprint(text), values)
    }
}

/// In-memory fixture set with deterministic (insertion-order) serialization.
#[derive(Debug, Default, Clone)]
pub struct FixtureStore {
    entries: Vec<FixtureEntry>,
    index: HashMap<(FixtureKind, String), usize>,
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| GatewayError::FixtureIo {
            path: path.display().to_string(),
            source,
        })?;
        let mut store = Self::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| GatewayError::FixtureIo {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(&line).map_err(|e| GatewayError::InvalidResponse {
                    message: format!("{} line {}: {}", path.display(), idx + 1, e),
                })?;
            validate_entry(&entry)?;
            store.insert(entry);
        }
        Ok(store)
    }

    /// Insert unless an entry with the same kind and fingerprint exists.
    /// Returns whether the entry was new.
    pub fn insert(&mut self, entry: FixtureEntry) -> bool {
        let key = (entry.payload.kind(), entry.fp.clone());
        if self.index.contains_key(&key) {
            return false;
        }
        self.index.insert(key, self.entries.len());
        self.entries.push(entry);
        true
    }

    pub fn completion(&self, fp: &str) -> Option<&CompletionFixture> {
        let idx = self.index.get(&(FixtureKind::Completion, fp.to_string()))?;
        match &self.entries[*idx].payload {
            FixturePayload::Completion(c) => Some(c),
            FixturePayload::Embedding(_) => None,
        }
    }

    pub fn embedding(&self, fp: &str) -> Option<&EmbeddingFixture> {
        let idx = self.index.get(&(FixtureKind::Embedding, fp.to_string()))?;
        match &self.entries[*idx].payload {
            FixturePayload::Embedding(e) => Some(e),
            FixturePayload::Completion(_) => None,
        }
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Write all entries as JSONL, one per line, in insertion order.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let io_err = |source| GatewayError::FixtureIo {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for entry in &self.entries {
            let line = serde_json::to_string(entry).expect("fixture entries serialize");
            out.write_all(line.as_bytes()).map_err(io_err)?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

fn validate_entry(entry: &FixtureEntry) -> Result<(), GatewayError> {
    match &entry.payload {
        FixturePayload::Completion(c) => {
            Completion::from(c).check_logprobs().map_err(|e| {
                GatewayError::InvalidResponse {
                    message: format!("fixture {}: {}", entry.fp, e),
                }
            })
        }
        FixturePayload::Embedding(e) => {
            if e.values.is_empty() {
                return Err(GatewayError::InvalidResponse {
                    message: format!("fixture {}: embedding has no components", entry.fp),
                });
            }
            Ok(())
        }
    }
}

/// Offline backend: every call is a pure fixture lookup, so no network access
/// can ever happen. Misses report the request fingerprint.
pub struct ReplayBackend {
    store: FixtureStore,
    source: String,
}

impl ReplayBackend {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        Ok(Self {
            store: FixtureStore::load(path)?,
            source: path.display().to_string(),
        })
    }

    pub fn from_store(store: FixtureStore) -> Self {
        Self {
            store,
            source: "memory".to_string(),
        }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let fp = completion_fingerprint(request);
        self.store
            .completion(&fp)
            .map(Completion::from)
            .ok_or(GatewayError::FixtureMiss {
                kind: FixtureKind::Completion,
                fingerprint: fp,
            })
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest {
                message: "cannot embed empty text".into(),
            });
        }
        let fp = embedding_fingerprint(text);
        self.store
            .embedding(&fp)
            .map(|e| EmbeddingVector {
                values: e.values.clone(),
            })
            .ok_or(GatewayError::FixtureMiss {
                kind: FixtureKind::Embedding,
                fingerprint: fp,
            })
    }

    fn describe(&self) -> String {
        format!("replay:{}", self.source)
    }
}

/// Wraps another backend, persisting every (fingerprint, response) pair to a
/// JSONL sink so later runs can replay offline. Repeated requests are served
/// from the store, which also makes the fixture idempotent by fingerprint.
pub struct RecordingBackend {
    inner: Box<dyn Backend>,
    state: Mutex<RecorderState>,
    path: PathBuf,
}

struct RecorderState {
    store: FixtureStore,
    sink: BufWriter<File>,
}

/// Wrap `inner` so every response is persisted to `sink`. Existing entries in
/// the sink are loaded first, so a resumed recording session stays idempotent.
pub fn record_fixture(
    inner: Box<dyn Backend>,
    sink: impl AsRef<Path>,
) -> Result<RecordingBackend, GatewayError> {
    RecordingBackend::new(inner, sink)
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn Backend>, sink: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = sink.as_ref().to_path_buf();
        let store = if path.exists() {
            FixtureStore::load(&path)?
        } else {
            FixtureStore::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| GatewayError::FixtureIo {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self {
            inner,
            state: Mutex::new(RecorderState {
                store,
                sink: BufWriter::new(file),
            }),
            path,
        })
    }

    fn persist(&self, entry: FixtureEntry) -> Result<(), GatewayError> {
        let mut state = self.state.lock().expect("recorder state");
        let line = serde_json::to_string(&entry).expect("fixture entries serialize");
        if state.store.insert(entry) {
            let io_err = |source| GatewayError::FixtureIo {
                path: self.path.display().to_string(),
                source,
            };
            state.sink.write_all(line.as_bytes()).map_err(io_err)?;
            state.sink.write_all(b"\n").map_err(io_err)?;
            state.sink.flush().map_err(io_err)?;
        }
        Ok(())
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let fp = completion_fingerprint(request);
        if let Some(hit) = self.state.lock().expect("recorder state").store.completion(&fp) {
            return Ok(Completion::from(hit));
        }
        let completion = self.inner.complete(request)?;
        completion.check_logprobs()?;
        self.persist(FixtureEntry::completion(
            fp,
            CompletionFixture::from(&completion),
        ))?;
        Ok(completion)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest {
                message: "cannot embed empty text".into(),
            });
        }
        let fp = embedding_fingerprint(text);
        if let Some(hit) = self.state.lock().expect("recorder state").store.embedding(&fp) {
            return Ok(EmbeddingVector {
                values: hit.values.clone(),
            });
        }
        let embedding = self.inner.embed(text)?;
        if embedding.values.is_empty() {
            return Err(GatewayError::InvalidResponse {
                message: "backend returned an empty embedding".into(),
            });
        }
        self.persist(FixtureEntry::embedding(fp, embedding.values.clone()))?;
        Ok(embedding)
    }

    fn describe(&self) -> String {
        format!("record:{} over {}", self.path.display(), self.inner.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    // Programmable stand-in for a live backend.
    struct Scripted {
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new() -> Self {
            Self {
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Backend for Scripted {
        fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(Completion {
                text: format!("reply to {} bytes", request.prompt.len()),
                token_logprobs: request.want_logprobs.then(|| {
                    vec![
                        TokenLogprob {
                            token: "a".into(),
                            logprob: -0.1,
                        },
                        TokenLogprob {
                            token: "b".into(),
                            logprob: -0.2,
                        },
                    ]
                }),
                model_id: "scripted".into(),
                usage: Usage::default(),
            })
        }

        fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(EmbeddingVector {
                values: vec![text.len() as f64, 1.0],
            })
        }

        fn describe(&self) -> String {
            "scripted".into()
        }
    }

    fn classification_request(text: &str) -> CompletionRequest {
        CompletionRequest::new(format!("Question: {text}\nClassification:"))
            .with_max_tokens(8)
            .with_stop(vec!["\n".into()])
    }

    #[test]
    fn replay_returns_scripted_completion() {
        let request = classification_request("Which room is the midterm in?");
        let mut store = FixtureStore::new();
        store.insert(FixtureEntry::for_request(&request, "homework"));
        let backend = ReplayBackend::from_store(store);
        assert_eq!(backend.complete(&request).unwrap().text, "homework");
    }

    #[test]
    fn replay_miss_names_the_fingerprint() {
        let backend = ReplayBackend::from_store(FixtureStore::new());
        let request = classification_request("anything");
        let err = backend.complete(&request).unwrap_err();
        match err {
            GatewayError::FixtureMiss { kind, fingerprint } => {
                assert_eq!(kind, FixtureKind::Completion);
                assert_eq!(fingerprint, super::super::completion_fingerprint(&request));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn echo_fixture_logprobs_pass_through() {
        let request = CompletionRequest::new("prompt").echo_scoring("yes");
        let mut store = FixtureStore::new();
        store.insert(FixtureEntry::completion(
            super::super::completion_fingerprint(&request),
            CompletionFixture {
                text: "yes".into(),
                token_logprobs: Some(vec![
                    TokenLogprob {
                        token: "ye".into(),
                        logprob: -0.1,
                    },
                    TokenLogprob {
                        token: "s".into(),
                        logprob: -0.2,
                    },
                ]),
                model_id: "fixture".into(),
                usage: Usage::default(),
            },
        ));
        let backend = ReplayBackend::from_store(store);
        let completion = backend.complete(&request).unwrap();
        assert!((completion.logprob_sum().unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn embedding_lookup_and_determinism() {
        let mut store = FixtureStore::new();
        store.insert(FixtureEntry::for_embedding("hello", vec![0.6, 0.8]));
        let backend = ReplayBackend::from_store(store);
        let a = backend.embed("hello").unwrap();
        let b = backend.embed("hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 2);
        assert!(matches!(
            backend.embed("other"),
            Err(GatewayError::FixtureMiss { kind: FixtureKind::Embedding, .. })
        ));
        assert!(backend.embed("  ").is_err());
    }

    #[test]
    fn store_write_then_load_round_trips() {
        let mut store = FixtureStore::new();
        store.insert(FixtureEntry::for_request(&classification_request("a"), "conceptual"));
        store.insert(FixtureEntry::for_embedding("a", vec![1.0, 2.0]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        store.write(&path).unwrap();
        let loaded = FixtureStore::load(&path).unwrap();
        assert_eq!(loaded.entries(), store.entries());
    }

    #[test]
    fn load_rejects_positive_logprob_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"fp\": \"x\", \"kind\": \"completion\", \"response\": {\"text\": \"t\", \"token_logprobs\": [{\"token\": \"t\", \"logprob\": 0.5}]}}\n",
        )
        .unwrap();
        assert!(FixtureStore::load(&path).is_err());
    }

    #[test]
    fn recorder_persists_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let request = classification_request("Why relu?");

        let recorder = record_fixture(Box::new(Scripted::new()), &path).unwrap();
        let first = recorder.complete(&request).unwrap();
        let second = recorder.complete(&request).unwrap();
        assert_eq!(first, second);
        recorder.embed("Why relu?").unwrap();
        recorder.embed("Why relu?").unwrap();

        let store = FixtureStore::load(&path).unwrap();
        assert_eq!(store.len(), 2, "one completion + one embedding entry");
    }

    #[test]
    fn recording_then_replaying_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.jsonl");
        let requests: Vec<CompletionRequest> = (0..5)
            .map(|i| classification_request(&format!("question {i}")))
            .collect();

        let mut original = Vec::new();
        let original_embedding;
        {
            let recorder = record_fixture(Box::new(Scripted::new()), &path).unwrap();
            for req in &requests {
                original.push(recorder.complete(req).unwrap());
            }
            original_embedding = recorder.embed("corpus text").unwrap();
        }

        let replay = ReplayBackend::load(&path).unwrap();
        for (req, expected) in requests.iter().zip(&original) {
            assert_eq!(&replay.complete(req).unwrap(), expected);
        }
        assert_eq!(replay.embed("corpus text").unwrap(), original_embedding);
        // a request outside the recorded session misses
        assert!(replay.complete(&classification_request("new")).is_err());
    }

    #[test]
    fn resumed_recording_does_not_duplicate_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("resume.jsonl");
        let request = classification_request("resume me");
        {
            let recorder = record_fixture(Box::new(Scripted::new()), &path).unwrap();
            recorder.complete(&request).unwrap();
        }
        {
            let scripted = Scripted::new();
            let recorder = record_fixture(Box::new(scripted), &path).unwrap();
            recorder.complete(&request).unwrap();
        }
        let store = FixtureStore::load(&path).unwrap();
        assert_eq!(store.len(), 1);
    }
}
