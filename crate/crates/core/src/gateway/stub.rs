use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, ChatResponse, GatewayError, TranscriptEntry};
use crate::context::TokenCounter;
use crate::error::{Error, Result};
use crate::jsonl::read_jsonl_numbered;
use crate::prompt::PromptVariant;

pub const DEFAULT_STUB_RESPONSE: &str = "FINAL ANSWER: I don't know";

/// A `stub.jsonl` line. The fingerprint `*` sets the default response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubLine {
    pub fingerprint: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubScript {
    pub responses: HashMap<String, String>,
    pub default_response: String,
}

impl Default for StubScript {
    fn default() -> Self {
        StubScript {
            responses: HashMap::new(),
            default_response: DEFAULT_STUB_RESPONSE.to_string(),
        }
    }
}

impl StubScript {
    pub fn with_default(default_response: impl Into<String>) -> Self {
        StubScript {
            responses: HashMap::new(),
            default_response: default_response.into(),
        }
    }

    pub fn insert(&mut self, fingerprint: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(fingerprint.into(), response.into());
    }

    pub fn lookup(&self, fingerprint: &str) -> &str {
        self.responses
            .get(fingerprint)
            .map(String::as_str)
            .unwrap_or(&self.default_response)
    }

    pub fn parse<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut script = StubScript::default();
        for (line, row) in read_jsonl_numbered::<StubLine, _>(reader, source_name)? {
            if row.fingerprint.is_empty() {
                return Err(Error::parse(source_name, line, "empty fingerprint"));
            }
            if row.fingerprint == "*" {
                script.default_response = row.response;
            } else {
                script.responses.insert(row.fingerprint, row.response);
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), &path.display().to_string())
    }

    /// Replays recorded responses.
    pub fn from_transcripts(entries: &[TranscriptEntry]) -> Self {
        let mut script = StubScript::default();
        for e in entries {
            script.insert(e.fingerprint.clone(), e.response.clone());
        }
        script
    }
}

/// One observed stub call.
#[derive(Debug, Clone)]
pub struct StubCall {
    pub seq: usize,
    pub tag: Option<String>,
    pub fingerprint: String,
    pub variant: PromptVariant,
    pub started: Instant,
    pub finished: Instant,
}

type Responder = dyn Fn(&ChatRequest) -> Option<std::result::Result<String, GatewayError>> + Send + Sync;

/// Deterministic provider answering from a [`StubScript`]. An optional
/// responder function takes precedence over the script when it returns
/// `Some`. Calls are logged with timings and the in-flight high-water mark.
pub struct StubProvider {
    script: StubScript,
    responder: Option<Arc<Responder>>,
    delay: Duration,
    counter: TokenCounter,
    log: Mutex<Vec<StubCall>>,
    in_flight: AtomicUsize,
    high_water: AtomicUsize,
}

impl StubProvider {
    pub fn new(script: StubScript) -> Self {
        StubProvider {
            script,
            responder: None,
            delay: Duration::ZERO,
            counter: TokenCounter::default(),
            log: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
        }
    }

    pub fn with_responder<F>(mut self, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<std::result::Result<String, GatewayError>> + Send + Sync + 'static,
    {
        self.responder = Some(Arc::new(f));
        self
    }

    /// Simulated service time per call, used to observe concurrency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> Vec<StubCall> {
        let mut calls = self.log.lock().expect("stub log").clone();
        calls.sort_by_key(|c| c.seq);
        calls
    }

    pub fn high_water_mark(&self) -> usize {
        self.high_water.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ChatProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    async fn send(&self, req: &ChatRequest) -> std::result::Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.high_water.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let fingerprint = req.fingerprint();
        let outcome = match self.responder.as_ref().and_then(|f| f(req)) {
            Some(r) => r,
            None => Ok(self.script.lookup(&fingerprint).to_string()),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        {
            let mut log = self.log.lock().expect("stub log");
            let seq = log.len();
            log.push(StubCall {
                seq,
                tag: req.tag.clone(),
                fingerprint,
                variant: req.bundle.variant,
                started,
                finished: Instant::now(),
            });
        }
        let text = outcome?;
        let prompt = format!("{}{}", req.bundle.system, req.bundle.user);
        Ok(ChatResponse {
            prompt_tokens: self.counter.count(&prompt) as u64,
            completion_tokens: self.counter.count(&text) as u64,
            text,
            latency_ms: 0,
            provider: "stub".into(),
        })
    }
}
