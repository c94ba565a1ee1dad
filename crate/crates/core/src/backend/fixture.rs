//! Record/replay fixtures keyed by `(sha256(prompt), run_index)`.
//!
//! On disk a store is JSON Lines, one [`FixtureRecord`] per line. Optional
//! show metadata lives next to it in `<file>.meta.json`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    sanitize_completion, validate_request, BackendError, CompletionRequest, CompletionResponse,
    ModelBackend,
};
use crate::clock::{format_timestamp, Clock};

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub prompt_sha256: String,
    pub run_index: u32,
    pub text: String,
    pub backend: String,
    pub recorded_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub show: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture {prompt_sha256} run {run_index} already recorded with different text")]
    DuplicateKeyConflict {
        prompt_sha256: String,
        run_index: u32,
    },
    #[error("fixture file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("fixture file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Key = (String, u32);

/// Immutable-entry prompt→completion store.
#[derive(Debug, Clone, Default)]
pub struct FixtureStore {
    records: Vec<FixtureRecord>,
    index: HashMap<Key, usize>,
    pub metadata: FixtureMetadata,
}

impl FixtureStore {
    pub fn new(metadata: FixtureMetadata) -> Self {
        Self {
            metadata,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }

    pub fn get(&self, prompt_sha256: &str, run_index: u32) -> Option<&FixtureRecord> {
        self.index
            .get(&(prompt_sha256.to_string(), run_index))
            .map(|&i| &self.records[i])
    }

    pub fn lookup(&self, prompt: &str, run_index: u32) -> Option<&FixtureRecord> {
        self.get(&prompt_digest(prompt), run_index)
    }

    /// Inserts a record. Re-inserting identical text is a no-op; different
    /// text under an existing key is a conflict.
    pub fn insert(&mut self, record: FixtureRecord) -> Result<(), FixtureError> {
        let key = (record.prompt_sha256.clone(), record.run_index);
        if let Some(&i) = self.index.get(&key) {
            if self.records[i].text == record.text {
                return Ok(());
            }
            return Err(FixtureError::DuplicateKeyConflict {
                prompt_sha256: key.0,
                run_index: key.1,
            });
        }
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Records a completed request/response pair.
    pub fn record(
        &mut self,
        request: &CompletionRequest,
        response: &CompletionResponse,
        recorded_at: &str,
    ) -> Result<(), FixtureError> {
        self.insert(FixtureRecord {
            prompt_sha256: prompt_digest(&request.prompt),
            run_index: request.run_index,
            text: response.text.clone(),
            backend: response.backend_id.clone(),
            recorded_at: recorded_at.to_string(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("fixture records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, FixtureError> {
        let mut store = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(line).map_err(|e| FixtureError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            store.insert(record)?;
        }
        Ok(store)
    }

    fn meta_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let io = |source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut store = Self::from_jsonl(&fs::read_to_string(path).map_err(io)?)?;
        let meta = Self::meta_path(path);
        if meta.exists() {
            let text = fs::read_to_string(&meta).map_err(io)?;
            store.metadata = serde_json::from_str(&text).map_err(|e| FixtureError::Parse {
                line: 1,
                reason: format!("{}: {e}", meta.display()),
            })?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FixtureError> {
        let path = path.as_ref();
        let io = |source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        if self.metadata != FixtureMetadata::default() {
            let meta = serde_json::to_string_pretty(&self.metadata).expect("metadata serializes");
            fs::write(Self::meta_path(path), meta + "\n").map_err(io)?;
        }
        Ok(())
    }
}

/// Serves completions from a fixture store. A missing entry is an error.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    store: Arc<FixtureStore>,
    id: String,
}

impl ReplayBackend {
    pub fn new(store: Arc<FixtureStore>) -> Self {
        Self {
            store,
            id: "replay".to_string(),
        }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }
}

impl ModelBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        validate_request(request)?;
        let started = Instant::now();
        let digest = prompt_digest(&request.prompt);
        let record =
            self.store
                .get(&digest, request.run_index)
                .ok_or_else(|| BackendError::FixtureMiss {
                    prompt_sha256: digest.clone(),
                    run_index: request.run_index,
                })?;
        Ok(CompletionResponse {
            text: sanitize_completion(&record.text, request.max_chars),
            backend_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            fixture_hit: true,
        })
    }
}

/// Passes requests through to an inner backend and records every successful
/// response. Writes are serialized through a mutex.
pub struct RecordingBackend<B> {
    inner: B,
    store: Mutex<FixtureStore>,
    clock: Arc<dyn Clock>,
}

impl<B: ModelBackend> RecordingBackend<B> {
    pub fn new(inner: B, store: FixtureStore, clock: Arc<dyn Clock>) -> Self {
        Self {
            inner,
            store: Mutex::new(store),
            clock,
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn snapshot(&self) -> FixtureStore {
        self.store.lock().unwrap().clone()
    }

    pub fn into_store(self) -> FixtureStore {
        self.store.into_inner().unwrap()
    }
}

impl<B: ModelBackend> ModelBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let recorded_at = format_timestamp(self.clock.now());
        self.store
            .lock()
            .unwrap()
            .record(request, &response, &recorded_at)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::clock::SteppingClock;

    fn response(text: &str) -> CompletionResponse {
        CompletionResponse {
            text: text.into(),
            backend_id: "test".into(),
            latency_ms: 0,
            fixture_hit: false,
        }
    }

    #[test]
    fn record_then_replay() {
        let mut store = FixtureStore::default();
        let req = CompletionRequest::new("At the Pizza Hut.", 400, 1);
        store
            .record(&req, &response("Brian apologized."), "2021-09-18T19:30:00.000Z")
            .unwrap();
        let replay = ReplayBackend::new(Arc::new(store));
        let out = replay.complete(&req).unwrap();
        assert_eq!(out.text, "Brian apologized.");
        assert!(out.fixture_hit);
    }

    #[test]
    fn same_key_same_text_is_idempotent() {
        let mut store = FixtureStore::default();
        let req = CompletionRequest::new("p", 400, 0);
        store.record(&req, &response("a."), "t").unwrap();
        store.record(&req, &response("a."), "t2").unwrap();
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn same_key_different_text_conflicts() {
        let mut store = FixtureStore::default();
        let req = CompletionRequest::new("p", 400, 0);
        store.record(&req, &response("a."), "t").unwrap();
        let err = store.record(&req, &response("b."), "t").unwrap_err();
        assert!(matches!(err, FixtureError::DuplicateKeyConflict { run_index: 0, .. }));
    }

    #[test]
    fn miss_is_an_error() {
        let replay = ReplayBackend::new(Arc::new(FixtureStore::default()));
        let err = replay
            .complete(&CompletionRequest::new("unseen", 400, 2))
            .unwrap_err();
        assert_eq!(
            err,
            BackendError::FixtureMiss {
                prompt_sha256: prompt_digest("unseen"),
                run_index: 2
            }
        );
    }

    #[test]
    fn replay_clips() {
        let mut store = FixtureStore::default();
        let req = CompletionRequest::new("p", 1, 0);
        store.record(&req, &response("long text."), "t").unwrap();
        let out = ReplayBackend::new(Arc::new(store)).complete(&req).unwrap();
        assert_eq!(out.text, "l");
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            prompt_digest(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn jsonl_file_round_trip() {
        let clock: Arc<dyn Clock> =
            Arc::new(SteppingClock::from_rfc3339("2021-09-18T19:30:00Z", 10));
        let recorder = RecordingBackend::new(
            MockBackend::new(),
            FixtureStore::new(FixtureMetadata {
                show: Some("rehearsal".into()),
                ..Default::default()
            }),
            clock,
        );
        for run in 0..3 {
            recorder
                .complete(&CompletionRequest::new("Brian apologized.", 400, run))
                .unwrap();
        }
        let store = recorder.into_store();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        store.save(&path).unwrap();
        let loaded = FixtureStore::load(&path).unwrap();
        assert_eq!(loaded.records(), store.records());
        assert_eq!(loaded.metadata.show.as_deref(), Some("rehearsal"));
        let line: serde_json::Value =
            serde_json::from_str(store.to_jsonl().lines().next().unwrap()).unwrap();
        for key in ["prompt_sha256", "run_index", "text", "backend", "recorded_at"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn parse_error_reports_line() {
        let err = FixtureStore::from_jsonl("\n{\"bad\": 1}\n").unwrap_err();
        assert!(matches!(err, FixtureError::Parse { line: 2, .. }));
    }
}
