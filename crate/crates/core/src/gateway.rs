//! Chat-completion access: a live HTTP client for the common
//! `/chat/completions` JSON shape, and a replay store keyed by prompt hash
//! for offline and deterministic runs.
//!
//! The gateway never edits completion text. Reasoning segments and fences
//! pass through untouched; cleaning them up is the sanitizer's job.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::prompt::prompt_hash;

pub const ENV_ENDPOINT: &str = "NNCAPTION_ENDPOINT";
pub const ENV_API_KEY: &str = "NNCAPTION_API_KEY";
pub const ENV_MODEL: &str = "NNCAPTION_MODEL";

pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const DEFAULT_TEMPERATURE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint failure after {attempts} request(s): {last}")]
    EndpointFailure { attempts: u32, last: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("fixture missing for prompt hash {0}")]
    FixtureMissing(String),
    #[error("fixture conflict for prompt hash {0}: stored text differs")]
    FixtureConflict(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be > 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.system_message.is_empty() && self.user_message.is_empty() {
            return Err(GatewayError::InvalidRequest("messages are empty".into()));
        }
        Ok(())
    }

    /// Replay key for this request.
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.system_message, &self.user_message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub raw_text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
}

/// Anything that turns one request into exactly one completion.
pub trait Completer: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<C: Completer + ?Sized> Completer for &C {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<C: Completer + ?Sized> Completer for Box<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }
}

// ---------------------------------------------------------------------------
// Fixture store and replay
// ---------------------------------------------------------------------------

/// A directory of `<prompt_hash>.txt` files holding raw completion bytes.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, prompt_hash: &str) -> PathBuf {
        self.dir.join(format!("{prompt_hash}.txt"))
    }

    fn io(&self, source: std::io::Error) -> GatewayError {
        GatewayError::Io {
            path: self.dir.clone(),
            source,
        }
    }

    pub fn record(&self, prompt_hash: &str, raw_text: &str, overwrite: bool) -> Result<(), GatewayError> {
        fs::create_dir_all(&self.dir).map_err(|e| self.io(e))?;
        let path = self.path_for(prompt_hash);
        if !overwrite {
            match fs::read(&path) {
                Ok(existing) if existing == raw_text.as_bytes() => return Ok(()),
                Ok(_) => return Err(GatewayError::FixtureConflict(prompt_hash.to_string())),
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => return Err(self.io(e)),
            }
        }
        fs::write(&path, raw_text.as_bytes()).map_err(|e| self.io(e))
    }

    pub fn load(&self, prompt_hash: &str) -> Result<String, GatewayError> {
        match fs::read(self.path_for(prompt_hash)) {
            Ok(bytes) => String::from_utf8(bytes).map_err(|e| GatewayError::Malformed(e.to_string())),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(GatewayError::FixtureMissing(prompt_hash.to_string())),
            Err(e) => Err(self.io(e)),
        }
    }
}

/// Stores `raw_text` so that replaying `prompt_hash` returns it byte for byte.
pub fn record_fixture(store_dir: &Path, prompt_hash: &str, raw_text: &str, overwrite: bool) -> Result<(), GatewayError> {
    FixtureStore::new(store_dir).record(prompt_hash, raw_text, overwrite)
}

/// Serves completions from a fixture store.
#[derive(Debug, Clone)]
pub struct ReplayGateway {
    store: FixtureStore,
}

impl ReplayGateway {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            store: FixtureStore::new(dir),
        }
    }
}

impl Completer for ReplayGateway {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let raw_text = self.store.load(&request.prompt_hash())?;
        Ok(ChatResponse {
            raw_text,
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
        })
    }
}

/// Forwards to an inner completer and writes every completion to a fixture
/// store, so a live run can be replayed later.
pub struct RecordingGateway<C> {
    inner: C,
    store: FixtureStore,
    overwrite: bool,
}

impl<C: Completer> RecordingGateway<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>, overwrite: bool) -> Self {
        Self {
            inner,
            store: FixtureStore::new(dir),
            overwrite,
        }
    }
}

impl<C: Completer> Completer for RecordingGateway<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        if response.finish_reason != FinishReason::Error {
            self.store.record(&request.prompt_hash(), &response.raw_text, self.overwrite)?;
        }
        Ok(response)
    }
}

// ---------------------------------------------------------------------------
// Live endpoint
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub retry_limit: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub max_concurrency: usize,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: "deepseek-r1-0528-qwen3-8b".to_string(),
            retry_limit: 2,
            initial_backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(300),
            max_concurrency: 2,
        }
    }

    /// Reads the endpoint URL, API key and model name from the environment.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_ENDPOINT).ok()?;
        Some(Self::with_env(url))
    }

    /// `url` with the API key and model name taken from the environment.
    pub fn with_env(url: impl Into<String>) -> Self {
        let mut config = Self::new(url);
        config.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        if let Ok(model) = std::env::var(ENV_MODEL) {
            config.model = model;
        }
        config
    }
}

struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

struct PermitGuard<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        PermitGuard(self)
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpGateway {
    config: EndpointConfig,
    agent: ureq::Agent,
    permits: Permits,
}

enum Failure {
    Retryable(String),
    Fatal(GatewayError),
}

fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

impl HttpGateway {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits::new(config.max_concurrency);
        Self { config, agent, permits }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        let model = if request.model_name.is_empty() {
            &self.config.model
        } else {
            &request.model_name
        };
        json!({
            "model": model,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "n": 1,
            "stream": false,
        })
    }

    fn send_once(&self, body: &str) -> Result<ChatResponse, Failure> {
        let started = Instant::now();
        let mut req = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send(body).map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        if is_retryable_status(status) {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(GatewayError::HttpStatus { status, body: text }));
        }
        let mut parsed = parse_completion(&text).map_err(Failure::Fatal)?;
        parsed.latency_ms = started.elapsed().as_millis() as u64;
        Ok(parsed)
    }
}

impl Completer for HttpGateway {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let body = self.body(request).to_string();
        let _permit = self.permits.acquire();

        let mut backoff = self.config.initial_backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.send_once(&body) {
                Ok(response) => return Ok(response),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(last)) => {
                    if attempts > self.config.retry_limit {
                        return Err(GatewayError::EndpointFailure { attempts, last });
                    }
                    log::warn!("completion request failed ({last}); retrying in {backoff:?}");
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
}

/// Reads `choices[0].message.content` and `choices[0].finish_reason`.
pub fn parse_completion(body: &str) -> Result<ChatResponse, GatewayError> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Malformed("no choices[0]".into()))?;
    let raw_text = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| GatewayError::Malformed("choices[0].message.content is not a string".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(|f| f.as_str()) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    Ok(ChatResponse {
        raw_text,
        finish_reason,
        latency_ms: 0,
    })
}
