use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

/// Exponential backoff: the k-th retry waits `base_delay_ms * 2^(k-1)`.
/// Retries happen only on timeouts, rate limiting and 5xx responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub const BACKOFF: u64 = 2;

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = Self::BACKOFF.saturating_pow(retry.saturating_sub(1));
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

impl<B: ChatBackend> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Self::with_sleeper(inner, policy, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(inner: B, policy: RetryPolicy, sleeper: Arc<dyn Sleeper>) -> Self {
        Self {
            inner,
            policy: RetryPolicy {
                max_attempts: policy.max_attempts.max(1),
                ..policy
            },
            sleeper,
        }
    }
}

impl<B: ChatBackend> ChatBackend for RetryingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut attempt = 1;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_retryable() && attempt < self.policy.max_attempts => {
                    self.sleeper.sleep(self.policy.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
