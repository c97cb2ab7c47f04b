//! Uniform chat-completion interface over remote backends and deterministic
//! scripted providers, with token-usage accounting for the system-efficiency
//! metric.

pub mod ledger;
pub mod provider;
pub mod recording;
pub mod remote;
pub mod scripted;

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::{UsageEntry, UsageLedger};
pub use provider::{CallSettings, ChatProvider, Gateway, ProviderReply, RetryPolicy};
pub use recording::{RecordedCall, RecordingProvider, ReplayProvider};
pub use remote::RemoteProvider;
pub use scripted::{Script, ScriptStep, ScriptedProvider};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("script exhausted: no unconsumed step matches call #{call} (purpose {purpose})")]
    ScriptExhausted { call: usize, purpose: Purpose },
    #[error("replay diverged at step {step}: {detail}")]
    ReplayDivergence { step: usize, detail: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed transcript or script: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
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

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// What a call is for. Every request carries one so the usage ledger can be
/// partitioned by role in the workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Patient,
    Physician,
    Judge,
    Synth,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Purpose::Patient => "patient",
            Purpose::Physician => "physician",
            Purpose::Judge => "judge",
            Purpose::Synth => "synth",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTags {
    pub purpose: Purpose,
    pub agent_id: String,
    pub case_id: String,
}

impl RequestTags {
    pub fn new(purpose: Purpose, agent_id: impl Into<String>, case_id: impl Into<String>) -> Self {
        Self {
            purpose,
            agent_id: agent_id.into(),
            case_id: case_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tags: RequestTags,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "messages must be nonempty".to_string(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be nonnegative, got {}",
                self.temperature
            )));
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.content.is_empty() && m.role != Role::Assistant {
                return Err(GatewayError::InvalidRequest(format!(
                    "message {i} has empty content for role {}",
                    m.role.as_str()
                )));
            }
        }
        Ok(())
    }

    /// All message contents joined with newlines: the prompt text used for
    /// script matching, token estimation, and boundary scans.
    pub fn prompt_text(&self) -> String {
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

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
        }
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: TokenUsage,
}

/// Deterministic fallback token count used only when a backend omits usage:
/// one token per four characters, rounded up. Monotone in text length.
pub fn estimate_tokens(text: &str) -> u64 {
    let chars = text.chars().count() as u64;
    chars.div_ceil(4)
}
