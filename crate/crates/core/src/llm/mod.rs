//! Chat-completion client used by both inference phases.

mod mock;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::prompt::{ChatMessage, RenderedPrompt};
use crate::retry::{with_retries, Attempted, Retryable, RetryPolicy};

pub use mock::{MockLlm, MockScript, MOCK_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", content = "message", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LlmError {
    #[error("endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("bad response: {0}")]
    BadResponse(String),
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::EndpointUnavailable(_) => "ENDPOINT_UNAVAILABLE",
            LlmError::RateLimited(_) => "RATE_LIMITED",
            LlmError::BadResponse(_) => "BAD_RESPONSE",
        }
    }
}

impl Retryable for LlmError {
    fn is_retryable(&self) -> bool {
        matches!(self, LlmError::EndpointUnavailable(_) | LlmError::RateLimited(_))
    }
}

/// Request body in the common chat-completion wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Text of the last user message.
    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == crate::prompt::Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    /// Sends one request and returns the first choice's message content.
    async fn send(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    pub base_url: String,
    pub model: String,
    /// Unset means the phase default: 0.7 for generation, 0.0 for annotation.
    pub temperature: Option<f64>,
    pub max_retries: u32,
    pub concurrency_limit: usize,
    pub timeout_secs: u64,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    /// Hard limit on the estimated prompt size.
    pub max_prompt_tokens: Option<usize>,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            temperature: None,
            max_retries: 3,
            concurrency_limit: 4,
            timeout_secs: 120,
            backoff_base_ms: 500,
            backoff_max_ms: 20_000,
            api_key_env: "MAILTOD_API_KEY".into(),
            max_prompt_tokens: None,
        }
    }
}

impl LlmClientConfig {
    pub const GENERATION_TEMPERATURE: f64 = 0.7;
    pub const ANNOTATION_TEMPERATURE: f64 = 0.0;

    pub fn generation() -> Self {
        Self {
            temperature: Some(Self::GENERATION_TEMPERATURE),
            ..Self::default()
        }
    }

    pub fn annotation() -> Self {
        Self {
            temperature: Some(Self::ANNOTATION_TEMPERATURE),
            ..Self::default()
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature.unwrap_or(Self::GENERATION_TEMPERATURE)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.backoff_base_ms),
            max_delay: Duration::from_millis(self.backoff_max_ms),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.concurrency_limit == 0 {
            return Err("concurrency_limit must be at least 1".into());
        }
        if self.temperature.is_some_and(|t| t.is_nan() || t < 0.0) {
            return Err("temperature must be a number >= 0".into());
        }
        Ok(())
    }
}

/// POSTs to `{base_url}/chat/completions`.
pub struct HttpChatBackend {
    url: String,
    token: Option<String>,
    http: reqwest::Client,
}

impl HttpChatBackend {
    pub fn new(cfg: &LlmClientConfig) -> Self {
        let token = std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty());
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .expect("http client builds");
        Self {
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            token,
            http,
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn send(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut builder = self.http.post(&self.url).json(req);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let resp = builder
            .send()
            .await
            .map_err(|e| LlmError::EndpointUnavailable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited(format!("HTTP {status}")));
        }
        if status.is_server_error() {
            return Err(LlmError::EndpointUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(LlmError::BadResponse(format!("HTTP {status}: {body}")));
        }
        let body = resp
            .text()
            .await
            .map_err(|e| LlmError::EndpointUnavailable(e.to_string()))?;
        let parsed: CompletionResponse =
            serde_json::from_str(&body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))
    }
}

/// A backend plus the per-phase settings: model, temperature, retries and
/// an in-flight limit.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    config: LlmClientConfig,
    permits: Arc<Semaphore>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, config: LlmClientConfig) -> Self {
        let permits = Arc::new(Semaphore::new(config.concurrency_limit.max(1)));
        Self {
            backend,
            config,
            permits,
        }
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    pub fn request(&self, prompt: &RenderedPrompt) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages: prompt.messages.clone(),
            temperature: self.config.temperature(),
        }
    }

    /// Sends the prompt, retrying transient failures with exponential backoff.
    pub async fn complete(
        &self,
        prompt: &RenderedPrompt,
    ) -> Result<Attempted<String>, Attempted<LlmError>> {
        let req = self.request(prompt);
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        with_retries(&self.config.retry_policy(), || self.backend.send(&req)).await
    }
}
