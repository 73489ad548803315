//! Chat-completion backends: a deterministic in-process mock keyed by prompt tag and an
//! HTTP adapter for JSON chat APIs. Everything above this layer talks to [`ChatBackend`].

pub mod http;
mod mock;
pub mod prompts;
mod reply;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpEmbedder};
pub use mock::{MockBackend, Responder};
pub use prompts::{PromptError, PromptSet, PromptTemplate};
pub use reply::{parse_decision, render_decision, ReplyParseError, MISSING_REASONING};

/// Purpose tags used to route requests to mock responders.
pub mod tags {
    pub const ANALYTIC: &str = "analytic";
    pub const HEURISTIC: &str = "heuristic";
    pub const REFLECTION: &str = "reflection";
    pub const VLM: &str = "vlm";
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("HTTP status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no mock responder registered for tag '{0}'")]
    NoResponder(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    Request(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Timeout { .. } | ClientError::Transport { .. } => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Purpose tag ("analytic", "heuristic", "reflection", "vlm").
    pub tag: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(tag: &str, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self { tag: tag.to_string(), system: system.into(), user: user.into(), temperature: 0.0, max_tokens: 512 }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.system.trim().is_empty() || self.user.trim().is_empty() {
            return Err(ClientError::Request("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::Request(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: f64,
    pub backend_id: String,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL; requests go to `{endpoint}/chat/completions` and `{endpoint}/embeddings`.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub auth_env: Option<String>,
    pub timeout_s: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model: String::new(),
            auth_env: None,
            timeout_s: 30.0,
            retries: 2,
            backoff_ms: 500,
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ClientError::Config(format!("timeout_s must be positive, got {}", self.timeout_s)));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.kind == BackendKind::Http {
            if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                return Err(ClientError::Config("http backend requires an endpoint".into()));
            }
            if self.auth_env.as_deref().is_none_or(|e| e.trim().is_empty()) {
                return Err(ClientError::Config("http backend requires auth_env".into()));
            }
        }
        Ok(())
    }
}

/// Builds an HTTP backend, or returns `mock` for the mock kind.
pub fn build_backend(cfg: &BackendConfig, mock: Arc<dyn ChatBackend>) -> Result<Arc<dyn ChatBackend>, ClientError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::Mock => Ok(mock),
        BackendKind::Http => Ok(Arc::new(HttpBackend::new(cfg.clone())?)),
    }
}
