//! Chat-completion providers behind one trait.
//!
//! Four implementations, all interchangeable via `Arc<dyn Provider>`:
//!
//! - [`HttpProvider`] — OpenAI-compatible HTTP endpoint with retry
//! - [`ScriptedProvider`] — canned responses for tests and offline runs
//! - [`RecordingProvider`] / [`ReplayProvider`] — cassette record/replay
//! - [`ConcurrencyLimited`] — wrapper capping in-flight calls run-wide
//!
//! Requests are identified by a [`fingerprint`]: the SHA-256 of a
//! canonical JSON encoding of the fields that determine the response
//! (model, messages, temperature). Cassettes key on the fingerprint, so
//! replay is order-independent and survives cosmetic request reordering.

mod cassette;
mod http;
mod limit;
mod scripted;

pub use cassette::{Cassette, CassetteEntry, RecordingProvider, ReplayProvider, CASSETTE_VERSION};
pub use http::{HttpProvider, API_KEY_VAR, BASE_URL_VAR, DEFAULT_BASE_URL, FALLBACK_API_KEY_VAR};
pub use limit::ConcurrencyLimited;
pub use scripted::{ScriptedProvider, ScriptedRule};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature,
            max_tokens: None,
        }
    }

    /// All message text joined in order — what scripted rules match on.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub model: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {message}")]
    Api { status: u16, message: String },
    #[error("no recorded response for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error(
        "request fingerprint {fingerprint} was already recorded; \
         identical requests should replay one response, not record two"
    )]
    DuplicateFingerprint { fingerprint: String },
    #[error("cassette I/O failed: {0}")]
    Io(String),
    #[error("malformed cassette: {0}")]
    MalformedCassette(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted provider has no response left for this request")]
    ScriptExhausted,
}

impl LlmError {
    /// Errors worth retrying against a live endpoint. Everything recorded
    /// or scripted is deterministic, so only live-transport classes apply.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            LlmError::RateLimited(_)
                | LlmError::Transport(_)
                | LlmError::Api { status: 500..=599, .. }
        )
    }
}

/// A chat-completion backend. Implementations must be safe to share
/// behind an `Arc` and call concurrently.
#[async_trait]
pub trait Provider: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Stable identity of a request: SHA-256 over a canonical compact JSON
/// object holding exactly the response-determining fields, with keys
/// sorted:
///
/// ```text
/// {"messages":[{"content":...,"role":...},...],"model":...,"temperature":...}
/// ```
///
/// `max_tokens` is deliberately excluded — it caps output length without
/// changing what is being asked.
pub fn fingerprint(request: &ChatRequest) -> String {
    let messages: Vec<serde_json::Value> = request
        .messages
        .iter()
        .map(|m| {
            serde_json::json!({
                "content": m.content,
                "role": m.role.as_str(),
            })
        })
        .collect();
    let canonical = serde_json::json!({
        "messages": messages,
        "model": request.model,
        "temperature": request.temperature,
    });
    let bytes = serde_json::to_vec(&canonical).expect("canonical request JSON never fails");
    hex::encode(Sha256::digest(&bytes))
}
