//! Completion backends behind one trait: a deterministic mock, a
//! record/replay fixture store, and a remote completion-over-HTTP client.

mod fixture;
mod mock;
mod remote;

pub use fixture::{
    prompt_digest, FixtureError, FixtureMetadata, FixtureRecord, FixtureStore, RecordingBackend,
    ReplayBackend,
};
pub use mock::{mock_complete, MockBackend};
pub use remote::{CompletionAdapter, RemoteBackend, RemoteBackendConfig};

use serde::{Deserialize, Serialize};

/// Default backend-side clip applied before segmentation.
pub const DEFAULT_MAX_COMPLETION_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_chars: usize,
    pub sampling_seed: Option<u64>,
    pub run_index: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, max_chars: usize, run_index: u32) -> Self {
        Self {
            prompt: prompt.into(),
            max_chars,
            sampling_seed: None,
            run_index,
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.sampling_seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub fixture_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("completion timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("rate limited (retry after {retry_after_secs:?} s)")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("no fixture for prompt {prompt_sha256} run {run_index}")]
    FixtureMiss {
        prompt_sha256: String,
        run_index: u32,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

pub(crate) fn validate_request(request: &CompletionRequest) -> Result<(), BackendError> {
    if request.max_chars == 0 {
        return Err(BackendError::InvalidRequest("max_chars must be >= 1".into()));
    }
    Ok(())
}

/// Normalizes line endings, strips control characters other than `\n`, and
/// clips to `max_chars` scalar values.
pub fn sanitize_completion(raw: &str, max_chars: usize) -> String {
    raw.replace("\r\n", "\n")
        .replace('\r', "\n")
        .chars()
        .filter(|c| *c == '\n' || !c.is_control())
        .take(max_chars)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_strips_controls_and_clips() {
        assert_eq!(sanitize_completion("a\u{7}b\r\nc\td", 100), "ab\ncd");
        assert_eq!(sanitize_completion("héllo", 2), "hé");
        assert_eq!(sanitize_completion("", 1), "");
    }
}
