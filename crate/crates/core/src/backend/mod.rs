//! Chat-completion backends: a live HTTP client, a content-addressed
//! record/replay cache and a retry layer.

mod cache;
mod http;
mod retry;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, CacheMode, CacheStore, CachedBackend};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV, BASE_URL_ENV, DEFAULT_BASE_URL, DEFAULT_TIMEOUT_SECS};
pub use retry::{RetryPolicy, RetryingBackend, Sleeper, ThreadSleeper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// A chat-completion request.
///
/// Entries of `extra` are sent as additional top-level body fields, except
/// keys starting with `_`, which are local annotations: they take part in
/// the cache key but never reach the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: 1024,
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("request has no messages".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.model.is_empty() {
            return Err(BackendError::InvalidRequest("model is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub model_id: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by provider")]
    RateLimited,
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("no cached response for key {key}")]
    CacheMiss { key: String },
    #[error("cache storage error: {0}")]
    Storage(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Whether the default retry policy should try again.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::RateLimited => true,
            BackendError::Provider { status, .. } => (500..600).contains(status),
            _ => false,
        }
    }
}

/// Anything that can answer a chat-completion request. Implementations
/// must be shareable across judge worker threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Backend driven by a closure. Handy for tests and fixture generation.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, BackendError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (self.0)(request)
    }
}

/// Counts calls that reach the wrapped backend.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    extra: &'a BTreeMap<String, String>,
}

const CACHE_KEY_DOMAIN: &[u8] = b"radjudge-chat-v1\n";

/// SHA-256 hex digest over the canonical JSON of the request fields. Field
/// order is fixed and `extra` is key-sorted, so the digest does not depend
/// on how the request was assembled.
pub fn cache_key(request: &ChatRequest) -> String {
    let material = KeyMaterial {
        model: &request.model,
        messages: &request.messages,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        extra: &request.extra,
    };
    let json = serde_json::to_vec(&material).expect("request material serializes");
    let mut h = Sha256::new();
    h.update(CACHE_KEY_DOMAIN);
    h.update(&json);
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new("m", vec![Message::system("s"), Message::user("u")])
    }

    #[test]
    fn key_is_deterministic() {
        assert_eq!(cache_key(&req()), cache_key(&req()));
        assert_eq!(cache_key(&req()).len(), 64);
    }

    #[test]
    fn key_covers_temperature() {
        let mut other = req();
        other.temperature = 0.7;
        assert_ne!(cache_key(&req()), cache_key(&other));
        let mut other = req();
        other.max_tokens += 1;
        assert_ne!(cache_key(&req()), cache_key(&other));
    }

    #[test]
    fn key_ignores_extra_insertion_order() {
        let mut a = req();
        a.extra.insert("b".into(), "2".into());
        a.extra.insert("a".into(), "1".into());
        let mut b = req();
        b.extra.insert("a".into(), "1".into());
        b.extra.insert("b".into(), "2".into());
        assert_eq!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn key_separates_message_boundaries() {
        let a = ChatRequest::new("m", vec![Message::user("ab"), Message::user("c")]);
        let b = ChatRequest::new("m", vec![Message::user("a"), Message::user("bc")]);
        assert_ne!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn validation() {
        assert!(req().validate().is_ok());
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        let mut r = req();
        r.temperature = -1.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn retryable_classes() {
        assert!(BackendError::Timeout.is_retryable());
        assert!(BackendError::RateLimited.is_retryable());
        assert!(BackendError::Provider { status: 503, body: String::new() }.is_retryable());
        assert!(!BackendError::Provider { status: 400, body: String::new() }.is_retryable());
        assert!(!BackendError::Unreachable("x".into()).is_retryable());
    }
}
