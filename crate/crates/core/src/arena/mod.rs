//! Episode and batch orchestration: the turn loop, exam serving, consultation
//! routing, termination, and resumable run state.

pub mod episode;
pub mod router;
pub mod run;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::CaseId;
use crate::gateway::{GatewayError, TokenUsage};
use crate::physician::Action;

pub use episode::{run_episode, serve_examination, ArenaConfig, EXAM_UNAVAILABLE};
pub use router::{build_roster, Router};
pub use run::{RunDirs, RunState, Runner};

pub const TRANSCRIPT_SCHEMA: &str = "action-event/v1";

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("no physician registered for department {0:?}")]
    UnknownDepartment(String),
    #[error("batches must run in order: {0}")]
    BatchOrder(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed transcript: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("dataset error: {0}")]
    Dataset(#[from] crate::domain::DatasetError),
    #[error("report error: {0}")]
    Report(#[from] crate::eval::ReportError),
    #[error("experience store error: {0}")]
    Experience(#[from] crate::physician::ExperienceStoreError),
}

/// What one transcript event carries besides the shared envelope: a physician
/// action, a patient utterance, a consultant reply, an exam serve, the
/// post-case reflection, or a terminal parse failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    Action { action: Action },
    PatientUtterance { utterance: String },
    ConsultReply { reply: String },
    ExamServed { exam: String },
    Reflection { lessons: usize },
    ParseFailure { attempts: u32, detail: String },
}

/// One transcript line. `turn` increases strictly within an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub turn: u32,
    pub actor: String,
    #[serde(flatten)]
    pub body: EventBody,
    pub observation: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    MaxTurns,
    ParseFailure,
}

/// Episode result: the deduplicated exam set, the final diagnosis and plan,
/// and how the episode ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub case_id: CaseId,
    pub ordered_exams: BTreeSet<String>,
    pub final_diagnosis: String,
    pub treatment_plan: String,
    pub n_turns: u32,
    pub terminated_by: Termination,
}

#[derive(Serialize, Deserialize)]
struct TranscriptLine {
    schema: String,
    #[serde(flatten)]
    event: ActionEvent,
}

/// Writes one episode transcript, one event per line.
pub fn save_transcript(path: impl AsRef<Path>, events: &[ActionEvent]) -> Result<(), ArenaError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| ArenaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    for event in events {
        let line = TranscriptLine {
            schema: TRANSCRIPT_SCHEMA.to_string(),
            event: event.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n").map_err(|source| ArenaError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    writer.flush().map_err(|source| ArenaError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_transcript(path: impl AsRef<Path>) -> Result<Vec<ActionEvent>, ArenaError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ArenaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|source| ArenaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(&line)?;
        events.push(parsed.event);
    }
    Ok(events)
}
