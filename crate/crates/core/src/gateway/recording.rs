//! Record/replay harness. A recording wraps any provider and captures each
//! call at the provider boundary; replaying a stored transcript reproduces
//! the exact responses and usage in the same order, and any deviation in the
//! request stream is a divergence error naming the first mismatching step.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, GatewayError, ProviderReply, TokenUsage};

pub const RECORD_SCHEMA: &str = "gateway-record/v1";

/// One recorded exchange: the full request and the provider-level reply
/// (content plus backend usage, absent if the backend reported none, so that
/// estimation behaves identically on replay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCall {
    pub request: ChatRequest,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    schema: String,
    #[serde(flatten)]
    call: RecordedCall,
}

/// Wraps an inner provider and logs every successful exchange.
pub struct RecordingProvider {
    inner: Arc<dyn ChatProvider>,
    calls: Mutex<Vec<RecordedCall>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn ChatProvider>) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().expect("recording poisoned").clone()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut writer = BufWriter::new(file);
        for call in self.calls() {
            let line = RecordLine {
                schema: RECORD_SCHEMA.to_string(),
                call,
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
}

impl ChatProvider for RecordingProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, GatewayError> {
        let reply = self.inner.complete(request)?;
        self.calls.lock().expect("recording poisoned").push(RecordedCall {
            request: request.clone(),
            content: reply.content.clone(),
            usage: reply.usage,
        });
        Ok(reply)
    }
}

/// Serves a stored transcript in order, verifying each incoming request
/// against the recorded one.
pub struct ReplayProvider {
    calls: Vec<RecordedCall>,
    cursor: Mutex<usize>,
}

impl ReplayProvider {
    pub fn new(calls: Vec<RecordedCall>) -> Self {
        Self {
            calls,
            cursor: Mutex::new(0),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut calls = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|source| GatewayError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(&line)?;
            calls.push(parsed.call);
        }
        Ok(Self::new(calls))
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, GatewayError> {
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let step = *cursor + 1;
        let recorded = self.calls.get(*cursor).ok_or_else(|| {
            GatewayError::ReplayDivergence {
                step,
                detail: "transcript exhausted: more requests than were recorded".to_string(),
            }
        })?;
        if recorded.request != *request {
            return Err(GatewayError::ReplayDivergence {
                step,
                detail: describe_mismatch(&recorded.request, request),
            });
        }
        *cursor += 1;
        Ok(ProviderReply {
            content: recorded.content.clone(),
            usage: recorded.usage,
        })
    }
}

fn describe_mismatch(recorded: &ChatRequest, actual: &ChatRequest) -> String {
    if recorded.tags != actual.tags {
        return format!(
            "tags differ (recorded {:?}/{}, got {:?}/{})",
            recorded.tags.purpose, recorded.tags.case_id, actual.tags.purpose, actual.tags.case_id
        );
    }
    if recorded.model != actual.model {
        return format!(
            "model differs (recorded {:?}, got {:?})",
            recorded.model, actual.model
        );
    }
    if recorded.messages != actual.messages {
        return "messages differ from the recorded request".to_string();
    }
    "request parameters differ from the recorded request".to_string()
}
