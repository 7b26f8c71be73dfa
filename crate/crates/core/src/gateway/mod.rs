//! Chat-completion gateway: one interface over a remote HTTP provider and a
//! deterministic scripted stub, with retries, bounded batches, token
//! accounting and an optional transcript.

mod http;
mod stub;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use backon::{ExponentialBuilder, Retryable};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{PromptBundle, PromptVariant};

pub use http::{HttpConfig, HttpProvider};
pub use stub::{StubCall, StubProvider, StubScript, DEFAULT_STUB_RESPONSE};

pub const DEFAULT_TEMPERATURE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited (status {status})")]
    RateLimited {
        status: u16,
        retry_after_ms: Option<u64>,
    },
    #[error("request timed out")]
    Timeout,
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("request rejected with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited { .. }
                | GatewayError::Timeout
                | GatewayError::Server { .. }
                | GatewayError::Transport(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub bundle: PromptBundle,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Caller bookkeeping (e.g. the question id); not part of the fingerprint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl ChatRequest {
    pub fn new(bundle: PromptBundle, model: impl Into<String>) -> Self {
        let max_output_tokens = bundle.max_output_tokens;
        ChatRequest {
            bundle,
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens,
            tag: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    /// Hex SHA-256 over model, system and user text.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.model, &self.bundle.system, &self.bundle.user)
    }
}

pub fn fingerprint(model: &str, system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(system.as_bytes());
    h.update([0u8]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub provider: String,
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    /// One attempt; retries are the gateway's job.
    async fn send(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    /// 3 retries at 1s, 2s, 4s with jitter.
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self) -> ExponentialBuilder {
        let b = ExponentialBuilder::new()
            .with_min_delay(self.base_delay)
            .with_max_delay(self.max_delay)
            .with_factor(2.0)
            .with_max_times(self.max_retries);
        if self.jitter {
            b.with_jitter()
        } else {
            b
        }
    }
}

/// Per-million-token prices used for cost estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub attempts: u64,
    pub failures: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn cost(&self, prices: &Prices) -> f64 {
        (self.prompt_tokens as f64 * prices.input_per_million
            + self.completion_tokens as f64 * prices.output_per_million)
            / 1_000_000.0
    }
}

/// One line of `transcripts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub model: String,
    pub variant: PromptVariant,
    pub system: String,
    pub user: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider: String,
}

pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    retry: RetryPolicy,
    usage: Mutex<Usage>,
    transcript: Option<Mutex<Vec<TranscriptEntry>>>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Gateway {
            provider,
            retry: RetryPolicy::default(),
            usage: Mutex::new(Usage::default()),
            transcript: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_transcript(mut self) -> Self {
        self.transcript = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let attempt = || async {
            self.usage.lock().expect("usage lock").attempts += 1;
            self.provider.send(req).await
        };
        let result = attempt
            .retry(self.retry.backoff())
            .when(GatewayError::is_retryable)
            .adjust(|err, dur| match (err, dur) {
                (
                    GatewayError::RateLimited {
                        retry_after_ms: Some(ms),
                        ..
                    },
                    Some(d),
                ) => Some(d.max(Duration::from_millis(*ms).min(self.retry.max_delay))),
                (_, dur) => dur,
            })
            .await;

        let mut usage = self.usage.lock().expect("usage lock");
        usage.calls += 1;
        match &result {
            Ok(resp) => {
                usage.prompt_tokens += resp.prompt_tokens;
                usage.completion_tokens += resp.completion_tokens;
                drop(usage);
                if let Some(t) = &self.transcript {
                    t.lock().expect("transcript lock").push(TranscriptEntry {
                        fingerprint: req.fingerprint(),
                        tag: req.tag.clone(),
                        model: req.model.clone(),
                        variant: req.bundle.variant,
                        system: req.bundle.system.clone(),
                        user: req.bundle.user.clone(),
                        response: resp.text.clone(),
                        prompt_tokens: resp.prompt_tokens,
                        completion_tokens: resp.completion_tokens,
                        provider: resp.provider.clone(),
                    });
                }
            }
            Err(err) => {
                usage.failures += 1;
                tracing::warn!(provider = self.provider.name(), error = %err, "chat completion failed");
            }
        }
        result
    }

    /// Runs `reqs` with at most `max_in_flight` outstanding (minimum 1).
    /// Results are positional; a failed request does not abort the batch.
    pub async fn complete_batch(
        &self,
        reqs: &[ChatRequest],
        max_in_flight: usize,
    ) -> Vec<Result<ChatResponse, GatewayError>> {
        stream::iter(reqs.iter().map(|r| self.complete(r)))
            .buffered(max_in_flight.max(1))
            .collect()
            .await
    }

    pub fn usage(&self) -> Usage {
        *self.usage.lock().expect("usage lock")
    }

    /// Transcript entries sorted by tag then fingerprint.
    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        let mut out = self
            .transcript
            .as_ref()
            .map(|t| t.lock().expect("transcript lock").clone())
            .unwrap_or_default();
        out.sort_by(|a, b| (&a.tag, &a.fingerprint).cmp(&(&b.tag, &b.fingerprint)));
        out
    }
}
