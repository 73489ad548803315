//! JSON chat-completion and embedding adapters over blocking HTTP.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatRequest, ChatResponse, ClientError};
use crate::memory::{l2_normalize, EncoderError, TextEncoder};

fn agent(timeout_s: f64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(timeout_s)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn api_key(auth_env: Option<&str>) -> Result<String, ClientError> {
    let name = auth_env.ok_or_else(|| ClientError::Config("auth_env not set".into()))?;
    std::env::var(name).map_err(|_| ClientError::Auth(format!("environment variable {name} is not set")))
}

fn post_once(agent: &ureq::Agent, url: &str, key: &str, body: &Value) -> Result<Value, ClientError> {
    let result = agent.post(url).header("Authorization", format!("Bearer {key}")).send_json(body);
    let mut resp = match result {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return Err(ClientError::Timeout { attempts: 1 }),
        Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
            return Err(ClientError::Timeout { attempts: 1 })
        }
        Err(e) => return Err(ClientError::Transport { attempts: 1, message: e.to_string() }),
    };
    let status = resp.status().as_u16();
    if status == 401 || status == 403 {
        return Err(ClientError::Auth(format!("HTTP {status}")));
    }
    if !(200..300).contains(&status) {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(ClientError::Http { status, body: body.chars().take(500).collect() });
    }
    match resp.body_mut().read_json::<Value>() {
        Ok(v) => Ok(v),
        Err(ureq::Error::Timeout(_)) => Err(ClientError::Timeout { attempts: 1 }),
        Err(e) => Err(ClientError::Malformed(e.to_string())),
    }
}

fn post_with_retries(agent: &ureq::Agent, cfg: &BackendConfig, url: &str, body: &Value) -> Result<Value, ClientError> {
    let key = api_key(cfg.auth_env.as_deref())?;
    let total = cfg.retries + 1;
    let mut attempt = 1;
    loop {
        match post_once(agent, url, &key, body) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && attempt < total => {
                log::warn!("{url}: attempt {attempt}/{total} failed: {e}");
                std::thread::sleep(Duration::from_millis(cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(10))));
                attempt += 1;
            }
            Err(ClientError::Timeout { .. }) => return Err(ClientError::Timeout { attempts: attempt }),
            Err(ClientError::Transport { message, .. }) => return Err(ClientError::Transport { attempts: attempt, message }),
            Err(e) => return Err(e),
        }
    }
}

fn endpoint(cfg: &BackendConfig, path: &str) -> Result<String, ClientError> {
    let base = cfg.endpoint.as_deref().ok_or_else(|| ClientError::Config("endpoint not set".into()))?;
    Ok(format!("{}/{path}", base.trim_end_matches('/')))
}

#[derive(Debug)]
pub struct HttpBackend {
    cfg: BackendConfig,
    agent: ureq::Agent,
    id: String,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let id = format!("http:{}", cfg.model);
        Ok(Self { agent: agent(cfg.timeout_s), cfg, id })
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        req.validate()?;
        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let start = Instant::now();
        let v = post_with_retries(&self.agent, &self.cfg, &endpoint(&self.cfg, "chat/completions")?, &body)?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))?;
        Ok(ChatResponse {
            text: text.to_string(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            backend_id: self.id.clone(),
        })
    }
}

/// Embedding-service encoder; vectors are L2-normalized like the built-in encoder.
#[derive(Debug)]
pub struct HttpEmbedder {
    cfg: BackendConfig,
    agent: ureq::Agent,
    dim: usize,
    id: String,
}

impl HttpEmbedder {
    pub fn new(cfg: BackendConfig, dim: usize) -> Result<Self, ClientError> {
        cfg.validate()?;
        if dim == 0 {
            return Err(ClientError::Config("embedding dimension must be positive".into()));
        }
        let id = format!("http:{}:{dim}", cfg.model);
        Ok(Self { agent: agent(cfg.timeout_s), cfg, dim, id })
    }
}

impl TextEncoder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        if text.trim().is_empty() {
            return Ok(vec![0.0; self.dim]);
        }
        let body = json!({"model": self.cfg.model, "input": text});
        let v = post_with_retries(&self.agent, &self.cfg, &endpoint(&self.cfg, "embeddings")?, &body)?;
        let raw = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Malformed("missing data[0].embedding".into()))?;
        let mut out: Vec<f64> = raw
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| ClientError::Malformed("non-numeric embedding component".into())))
            .collect::<Result<_, _>>()?;
        if out.len() != self.dim {
            return Err(EncoderError::Dimension { expected: self.dim, found: out.len() });
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        l2_normalize(&mut out);
        Ok(out)
    }
}
