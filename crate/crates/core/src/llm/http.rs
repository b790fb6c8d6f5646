//! Live provider speaking the OpenAI-compatible chat-completions protocol.
//!
//! Credentials come from the environment only — never from config files —
//! so recorded artifacts cannot leak a key.

use super::{ChatRequest, ChatResponse, LlmError, Provider, TokenUsage};
use async_trait::async_trait;
use serde::Deserialize;
use std::time::Duration;

/// Environment variable holding the API key; falls back to
/// [`FALLBACK_API_KEY_VAR`].
pub const API_KEY_VAR: &str = "BLOOMLOOP_API_KEY";
pub const FALLBACK_API_KEY_VAR: &str = "OPENAI_API_KEY";
/// Environment variable overriding the endpoint base URL.
pub const BASE_URL_VAR: &str = "BLOOMLOOP_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

const DEFAULT_MAX_ATTEMPTS: u32 = 3;
const DEFAULT_INITIAL_BACKOFF: Duration = Duration::from_millis(500);

pub struct HttpProvider {
    client: reqwest::Client,
    base_url: String,
    api_key: String,
    max_attempts: u32,
    initial_backoff: Duration,
}

#[derive(Deserialize)]
struct WireResponse {
    model: Option<String>,
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> HttpProvider {
        HttpProvider {
            client: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            initial_backoff: DEFAULT_INITIAL_BACKOFF,
        }
    }

    /// Build from the process environment. The key is required; the base
    /// URL defaults to the public endpoint.
    pub fn from_env() -> Result<HttpProvider, LlmError> {
        let api_key = std::env::var(API_KEY_VAR)
            .or_else(|_| std::env::var(FALLBACK_API_KEY_VAR))
            .map_err(|_| {
                LlmError::Auth(format!(
                    "no API key: set {API_KEY_VAR} (or {FALLBACK_API_KEY_VAR})"
                ))
            })?;
        if api_key.trim().is_empty() {
            return Err(LlmError::Auth(format!("{API_KEY_VAR} is set but empty")));
        }
        let base_url =
            std::env::var(BASE_URL_VAR).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Ok(HttpProvider::new(base_url, api_key))
    }

    /// Override the retry schedule (attempt count and initial backoff);
    /// the backoff doubles after each failed attempt.
    pub fn with_retry(mut self, max_attempts: u32, initial_backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.initial_backoff = initial_backoff;
        self
    }

    async fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let url = format!("{}/chat/completions", self.base_url);
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .await
            .map_err(|e| LlmError::Transport(e.to_string()))?;

        let status = response.status();
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            let message = truncate(&body, 500);
            return Err(match status.as_u16() {
                401 | 403 => LlmError::Auth(message),
                429 => LlmError::RateLimited(message),
                code => LlmError::Api { status: code, message },
            });
        }

        let wire: WireResponse = response
            .json()
            .await
            .map_err(|e| LlmError::Transport(format!("undecodable response body: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Transport("response carried no choices".to_string()))?;
        Ok(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            model: wire.model.unwrap_or_else(|| request.model.clone()),
            usage: wire.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens.unwrap_or(0),
                completion_tokens: u.completion_tokens.unwrap_or(0),
            }),
        })
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

#[async_trait]
impl Provider for HttpProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut backoff = self.initial_backoff;
        let mut last_error = None;
        for attempt in 1..=self.max_attempts {
            match self.attempt(request).await {
                Ok(response) => return Ok(response),
                Err(e) if e.is_retryable() && attempt < self.max_attempts => {
                    tokio::time::sleep(backoff).await;
                    backoff *= 2;
                    last_error = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_error.unwrap_or_else(|| LlmError::Transport("no attempts made".to_string())))
    }
}
