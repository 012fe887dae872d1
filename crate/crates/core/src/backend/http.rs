use std::io;
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

pub const API_KEY_ENV: &str = "RADJUDGE_API_KEY";
pub const BASE_URL_ENV: &str = "RADJUDGE_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_owned(),
            api_key: None,
            timeout: Duration::from_secs(DEFAULT_TIMEOUT_SECS),
        }
    }
}

impl HttpConfig {
    /// Reads base URL and API key from the environment.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.is_empty() {
                cfg.base_url = url;
            }
        }
        cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        cfg
    }
}

/// Blocking client for the chat-completions wire format.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        Self {
            agent,
            endpoint: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key: cfg.api_key,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

pub(crate) fn request_body(request: &ChatRequest) -> Value {
    let mut body = Map::new();
    body.insert("model".into(), json!(request.model));
    body.insert("messages".into(), json!(request.messages));
    body.insert("temperature".into(), json!(request.temperature));
    body.insert("max_tokens".into(), json!(request.max_tokens));
    for (k, v) in &request.extra {
        if !k.starts_with('_') && !body.contains_key(k) {
            body.insert(k.clone(), json!(v));
        }
    }
    Value::Object(body)
}

pub(crate) fn parse_body(body: &Value, fallback_model: &str, latency_ms: u64) -> Result<ChatResponse, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message".into()))?;
    let content = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => return Err(BackendError::Malformed(format!("content is not a string: {other}"))),
    };
    let usage = |k: &str| body.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse {
        content,
        model_id: body
            .get("model")
            .and_then(Value::as_str)
            .unwrap_or(fallback_model)
            .to_owned(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
        latency_ms,
    })
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        if let Some(io) = s.downcast_ref::<io::Error>() {
            if matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = s.source();
    }
    err.to_string().contains("timed out")
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let resp = match req.send_json(request_body(request)) {
            Ok(r) => r,
            Err(ureq::Error::Status(429, _)) => return Err(BackendError::RateLimited),
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(BackendError::Provider { status, body });
            }
            Err(ureq::Error::Transport(t)) => {
                if is_timeout(&t) {
                    return Err(BackendError::Timeout);
                }
                return Err(BackendError::Unreachable(t.to_string()));
            }
        };
        let body: Value = resp.into_json().map_err(|e| {
            if e.kind() == io::ErrorKind::TimedOut || e.kind() == io::ErrorKind::WouldBlock {
                BackendError::Timeout
            } else {
                BackendError::Malformed(e.to_string())
            }
        })?;
        let latency_ms = started.elapsed().as_millis() as u64;
        parse_body(&body, &request.model, latency_ms)
    }
}
