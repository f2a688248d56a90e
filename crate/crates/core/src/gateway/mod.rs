//! Uniform chat-completion interface.
//!
//! Three backends answer a [`ChatRequest`]: an OpenAI-compatible HTTP
//! endpoint, a scripted replay responder, and a synthetic responder driven by
//! a known preference matrix. The HTTP client, response cache and the shared
//! [`Gateway`] front end need the `runtime` feature.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub mod scripted;
pub mod synthetic;

#[cfg(feature = "runtime")]
mod cache;
#[cfg(feature = "runtime")]
mod client;
#[cfg(feature = "runtime")]
pub mod http;

#[cfg(feature = "runtime")]
pub use cache::ResponseCache;
#[cfg(feature = "runtime")]
pub use client::{Backend, Gateway, QueryContext};

/// Sampling knobs forwarded to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub repetition_penalty: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
}

impl Sampling {
    /// Hosted chat API defaults (temperature 1, top_p 1).
    pub fn hosted_chat() -> Sampling {
        Sampling {
            temperature: 1.0,
            top_p: 1.0,
            max_new_tokens: 512,
            repetition_penalty: 1.0,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
        }
    }

    /// Open-weights chat defaults (temperature 0.7, top_p 0.9, 512 new tokens).
    pub fn open_weights() -> Sampling {
        Sampling {
            temperature: 0.7,
            top_p: 0.9,
            ..Sampling::hosted_chat()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |what: &str| Err(GatewayError::InvalidRequest(what.to_string()));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must be in [0, 2]");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must be in (0, 1]");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.repetition_penalty <= 0.0 || self.repetition_penalty.is_nan() {
            return bad("repetition_penalty must be positive");
        }
        if !(-2.0..=2.0).contains(&self.presence_penalty) || !(-2.0..=2.0).contains(&self.frequency_penalty) {
            return bad("presence/frequency penalties must be in [-2, 2]");
        }
        Ok(())
    }
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::hosted_chat()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: Option<String>,
    pub user_prompt: String,
    pub sampling: Sampling,
    /// Prompt iteration; part of the cache key only, never sent on the wire.
    pub iteration: u32,
}

impl ChatRequest {
    /// Hex SHA-256 over (model, system prompt, user prompt, sampling, iteration).
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BackendKind {
    Http,
    Scripted,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub model_id: String,
    pub latency: Duration,
    pub backend: BackendKind,
    pub request_digest: String,
    /// Retries spent before this response (0 when the first attempt succeeded).
    pub retries: u32,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication failed (status {status})")]
    Authentication { status: u16 },
    #[error("gave up after {attempts} attempts (last status {last_status:?}): {message}")]
    RetriesExhausted {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("request rejected with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no scripted response for request {0}")]
    NoScript(String),
    #[error(transparent)]
    Synthetic(#[from] synthetic::SyntheticError),
    #[error("cache i/o: {0}")]
    Cache(String),
}
