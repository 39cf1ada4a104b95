//! Language-model backends behind a single chat-completion contract.
//!
//! Two implementations: [`HttpProvider`] talks JSON-over-HTTPS to any
//! chat-completion-compatible endpoint, [`ScriptedProvider`] replays canned
//! responses from a fixture file for deterministic offline runs. The
//! [`RecordingProvider`] decorator captures outbound requests so tests can
//! assert parameter plumbing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::StageKind;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 32_768;
pub const DEFAULT_MODEL: &str = "gpt-5";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

/// One chat-completion request: a system message and a user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
    /// Which pipeline stage issued this request; fixture entries may match on it.
    pub stage: Option<StageKind>,
}

impl ChatRequest {
    pub fn new(system_message: String, user_message: String) -> Self {
        ChatRequest {
            system_message,
            user_message,
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            model_name: DEFAULT_MODEL.to_string(),
            stage: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// The backend's reply, delivered verbatim. Empty text is a valid outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<TokenUsage>,
    pub provider_meta: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("backend refused request for budget/size reasons: {0}")]
    BudgetExceeded(String),
    #[error("fixture script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("fixture entry {index} is tagged '{expected}' but stage '{got}' requested it")]
    ScriptStageMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("no API credential configured (set {0})")]
    MissingCredential(&'static str),
}

/// A chat-completion backend.
///
/// Implementations take `&self`; the scripted provider serializes its cursor
/// internally so the pipeline's optional parallel quest expansion stays safe.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

// ---------------------------------------------------------------------------
// Scripted provider
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub text: String,
}

/// An ordered list of canned responses; each is consumed at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureScript {
    pub entries: Vec<FixtureEntry>,
}

#[derive(Debug, Error)]
#[error("fixture {path}: {message}")]
pub struct FixtureParseError {
    pub path: String,
    pub message: String,
}

/// Load a fixture script: a JSON array of `{"stage": optional, "text": string}`.
pub fn load_fixture(path: &Path) -> Result<FixtureScript, FixtureParseError> {
    let err = |message: String| FixtureParseError {
        path: path.display().to_string(),
        message,
    };
    let raw = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let entries: Vec<FixtureEntry> = serde_json::from_str(&raw)
        .map_err(|e| err(format!("line {}, column {}: {}", e.line(), e.column(), e)))?;
    Ok(FixtureScript { entries })
}

/// Replays a [`FixtureScript`] in order. Deterministic byte-for-byte.
pub struct ScriptedProvider {
    script: FixtureScript,
    cursor: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn new(script: FixtureScript) -> Self {
        ScriptedProvider {
            script,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, FixtureParseError> {
        Ok(ScriptedProvider::new(load_fixture(path)?))
    }

    /// How many scripted responses have been consumed so far.
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn len(&self) -> usize {
        self.script.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.entries.is_empty()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut cursor = self.cursor.lock().unwrap();
        let index = *cursor;
        let entry = self
            .script
            .entries
            .get(index)
            .ok_or(ProviderError::ScriptExhausted(index))?;
        if let (Some(expected), Some(stage)) = (&entry.stage, request.stage) {
            if expected != stage.slug() {
                return Err(ProviderError::ScriptStageMismatch {
                    index,
                    expected: expected.clone(),
                    got: stage.slug().to_string(),
                });
            }
        }
        *cursor += 1;
        Ok(ChatResponse {
            text: entry.text.clone(),
            usage: None,
            provider_meta: BTreeMap::from([("provider".to_string(), "scripted".to_string())]),
        })
    }
}

// ---------------------------------------------------------------------------
// Recording decorator
// ---------------------------------------------------------------------------

/// Wraps another provider and records every outbound request.
pub struct RecordingProvider<P> {
    inner: P,
    requests: Mutex<Vec<ChatRequest>>,
}

impl<P> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn recorded(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.requests.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

// ---------------------------------------------------------------------------
// Live HTTP provider
// ---------------------------------------------------------------------------

pub const API_KEY_ENV: &str = "QUESTLINE_API_KEY";
pub const API_KEY_ENV_FALLBACK: &str = "OPENAI_API_KEY";

/// Read the API credential from the environment.
pub fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_ENV)
        .or_else(|_| std::env::var(API_KEY_ENV_FALLBACK))
        .ok()
        .filter(|k| !k.is_empty())
}

/// Retry schedule for transport-level failures only. Content-level problems
/// (unparseable but delivered text) are the pipeline's concern, never retried
/// here.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

/// JSON-over-HTTPS chat-completion client.
pub struct HttpProvider {
    endpoint: String,
    api_key: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

impl HttpProvider {
    pub fn new(endpoint: &str, api_key: &str, retry: RetryPolicy) -> Self {
        HttpProvider {
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
            retry,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(600))
                .build()
                .expect("reqwest client builds"),
        }
    }

    pub fn from_env(endpoint: Option<&str>) -> Result<Self, ProviderError> {
        let api_key = api_key_from_env().ok_or(ProviderError::MissingCredential(API_KEY_ENV))?;
        Ok(HttpProvider::new(
            endpoint.unwrap_or(DEFAULT_ENDPOINT),
            &api_key,
            RetryPolicy::default(),
        ))
    }

    fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, AttemptError> {
        let body = WireRequest {
            model: &request.model_name,
            messages: [
                WireMessage {
                    role: "system",
                    content: &request.system_message,
                },
                WireMessage {
                    role: "user",
                    content: &request.user_message,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;

        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(AttemptError::Fatal(ProviderError::Auth(status.to_string())));
        }
        if status == reqwest::StatusCode::PAYLOAD_TOO_LARGE {
            return Err(AttemptError::Fatal(ProviderError::BudgetExceeded(
                status.to_string(),
            )));
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(AttemptError::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            if text.contains("context_length") || text.contains("max_tokens") {
                return Err(AttemptError::Fatal(ProviderError::BudgetExceeded(text)));
            }
            return Err(AttemptError::Retryable(format!("HTTP {status}: {text}")));
        }

        let wire: WireResponse = response
            .json()
            .map_err(|e| AttemptError::Retryable(format!("malformed response body: {e}")))?;
        let text = wire
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .unwrap_or_default();
        let mut provider_meta = BTreeMap::from([("provider".to_string(), "http".to_string())]);
        if let Some(model) = wire.model {
            provider_meta.insert("model".to_string(), model);
        }
        Ok(ChatResponse {
            text,
            usage: wire.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            provider_meta,
        })
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(ProviderError),
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(message)) => {
                    last = message;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(ProviderError::Transport {
            attempts: self.retry.max_attempts,
            message: last,
        })
    }
}
