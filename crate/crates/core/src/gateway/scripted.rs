//! Deterministic scripted provider: the offline test double behind every
//! reproducible run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, GatewayError, ProviderReply, Purpose, TokenUsage};

pub const SCRIPT_SCHEMA: &str = "script-step/v1";

/// One scripted exchange. A step matches a request when the purposes agree
/// and, if a pattern is present, the pattern occurs verbatim in the prompt
/// text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub purpose: Purpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub reply: String,
    pub usage: TokenUsage,
}

impl ScriptStep {
    pub fn new(purpose: Purpose, reply: impl Into<String>, usage: TokenUsage) -> Self {
        Self {
            purpose,
            pattern: None,
            reply: reply.into(),
            usage,
        }
    }

    pub fn with_pattern(mut self, pattern: impl Into<String>) -> Self {
        self.pattern = Some(pattern.into());
        self
    }

    fn matches(&self, request: &ChatRequest, prompt: &str) -> bool {
        self.purpose == request.tags.purpose
            && self.pattern.as_deref().is_none_or(|p| prompt.contains(p))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
}

#[derive(Serialize, Deserialize)]
struct ScriptLine {
    schema: String,
    #[serde(flatten)]
    step: ScriptStep,
}

impl Script {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        Self { steps }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut writer = BufWriter::new(file);
        for step in &self.steps {
            let line = ScriptLine {
                schema: SCRIPT_SCHEMA.to_string(),
                step: step.clone(),
            };
            serde_json::to_writer(&mut writer, &line)?;
            writer.write_all(b"\n").map_err(|source| GatewayError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        writer.flush().map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut steps = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|source| GatewayError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(&line)?;
            steps.push(parsed.step);
        }
        Ok(Self { steps })
    }
}

/// Sequence-matched playback: each call consumes the first unconsumed step
/// that matches it; a step is consumed at most once per replay. The cursor
/// state is behind a mutex so concurrent callers serialize.
pub struct ScriptedProvider {
    steps: Vec<ScriptStep>,
    state: Mutex<PlaybackState>,
}

#[derive(Default)]
struct PlaybackState {
    consumed: Vec<bool>,
    calls: usize,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        let consumed = vec![false; script.steps.len()];
        Self {
            steps: script.steps,
            state: Mutex::new(PlaybackState { consumed, calls: 0 }),
        }
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("script state poisoned");
        state.consumed.iter().filter(|&&c| !c).count()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, GatewayError> {
        let prompt = request.prompt_text();
        let mut state = self.state.lock().expect("script state poisoned");
        state.calls += 1;
        let call = state.calls;
        for (i, step) in self.steps.iter().enumerate() {
            if !state.consumed[i] && step.matches(request, &prompt) {
                state.consumed[i] = true;
                return Ok(ProviderReply {
                    content: step.reply.clone(),
                    usage: Some(step.usage),
                });
            }
        }
        Err(GatewayError::ScriptExhausted {
            call,
            purpose: request.tags.purpose,
        })
    }
}
