//! Completion-over-HTTP client.
//!
//! The wire contract is "prompt in, text out". Providers differ only in body
//! shape, so each one is a [`CompletionAdapter`] variant. Requests are never
//! retried: a completion may already have been produced server-side.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    sanitize_completion, validate_request, BackendError, CompletionRequest, CompletionResponse,
    ModelBackend,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompletionAdapter {
    /// `POST {base}/completions` with `{"model","prompt","max_tokens",...}`,
    /// reading `choices[0].text`. GPT-3 style endpoints speak this.
    #[default]
    OpenAiCompletions,
    /// `POST {base}/complete` with `{"prompt","max_chars","seed","run_index"}`,
    /// reading `text`.
    Generic,
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub adapter: CompletionAdapter,
}

impl RemoteBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: String::new(),
            api_key_env: None,
            timeout_ms: default_timeout_ms(),
            temperature: None,
            top_p: None,
            adapter: CompletionAdapter::default(),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    id: String,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// Builds the client, resolving the API key from the environment. A named
    /// but unset key variable is an [`BackendError::AuthFailure`].
    pub fn new(config: RemoteBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::AuthFailure(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let id = if config.model.is_empty() {
            "remote".to_string()
        } else {
            format!("remote:{}", config.model)
        };
        Ok(Self {
            config,
            api_key,
            agent,
            id,
        })
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.adapter {
            CompletionAdapter::OpenAiCompletions => format!("{base}/completions"),
            CompletionAdapter::Generic => format!("{base}/complete"),
        }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        match self.config.adapter {
            CompletionAdapter::OpenAiCompletions => {
                let mut body = json!({
                    "model": self.config.model,
                    "prompt": request.prompt,
                    // Roughly three characters per token leaves room for the clip.
                    "max_tokens": request.max_chars.div_ceil(3),
                });
                if let Some(t) = self.config.temperature {
                    body["temperature"] = json!(t);
                }
                if let Some(p) = self.config.top_p {
                    body["top_p"] = json!(p);
                }
                if let Some(seed) = request.sampling_seed {
                    body["seed"] = json!(seed);
                }
                body
            }
            CompletionAdapter::Generic => json!({
                "prompt": request.prompt,
                "max_chars": request.max_chars,
                "seed": request.sampling_seed,
                "run_index": request.run_index,
            }),
        }
    }

    fn extract_text(&self, body: &Value) -> Result<String, BackendError> {
        let text = match self.config.adapter {
            CompletionAdapter::OpenAiCompletions => body
                .get("choices")
                .and_then(|c| c.get(0))
                .and_then(|c| c.get("text")),
            CompletionAdapter::Generic => body.get("text"),
        };
        text.and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::MalformedResponse(format!("no completion text in {body}")))
    }
}

impl ModelBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        validate_request(request)?;
        let started = Instant::now();
        let mut call = self.agent.post(self.endpoint());
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        crate::net::note_outbound();
        let mut response = call.send_json(self.body(request)).map_err(map_transport)?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::AuthFailure(format!("HTTP {status}"))),
            429 => {
                let retry_after_secs = response
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse().ok());
                return Err(BackendError::RateLimited { retry_after_secs });
            }
            _ => return Err(BackendError::Unavailable(format!("HTTP {status}"))),
        }
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BackendError::Timeout,
                other => BackendError::MalformedResponse(other.to_string()),
            })?;
        let text = self.extract_text(&body)?;
        Ok(CompletionResponse {
            text: sanitize_completion(&text, request.max_chars),
            backend_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            fixture_hit: false,
        })
    }
}

pub(crate) fn map_transport(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        other => BackendError::Unavailable(other.to_string()),
    }
}
