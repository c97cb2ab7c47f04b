//! Physician agents: the clinical action space, the experience memory grown
//! by post-case reflection, and the retrieval paths feeding both back into
//! decisions.

pub mod grammar;
pub mod ops;

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CaseId, DepartmentId};

pub use grammar::{parse_action, render_action, ActionParseError};
pub use ops::{
    consult_reply, decide_next_action, reflect, retrieve_experience, retrieve_knowledge,
    Decision, EpisodeContext,
};

pub const EXPERIENCE_SCHEMA: &str = "experience-entry/v1";

/// The physician action space. Every decision turn yields exactly one of
/// these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Perceive,
    Inquire { question: String },
    OrderExam { exams: Vec<String> },
    Consult {
        target_department: DepartmentId,
        question: String,
    },
    RetrieveKnowledge { query: String },
    Diagnose { diagnosis: String },
    Treat { plan: String },
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::Perceive => "PERCEIVE",
            Action::Inquire { .. } => "INQUIRE",
            Action::OrderExam { .. } => "ORDER_EXAM",
            Action::Consult { .. } => "CONSULT",
            Action::RetrieveKnowledge { .. } => "RETRIEVE_KNOWLEDGE",
            Action::Diagnose { .. } => "DIAGNOSE",
            Action::Treat { .. } => "TREAT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Diagnostic,
    Examination,
    Treatment,
}

impl Dimension {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "diagnostic" => Some(Dimension::Diagnostic),
            "examination" => Some(Dimension::Examination),
            "treatment" => Some(Dimension::Treatment),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Diagnostic => f.write_str("diagnostic"),
            Dimension::Examination => f.write_str("examination"),
            Dimension::Treatment => f.write_str("treatment"),
        }
    }
}

/// One reflection-derived lesson. Entries are append-only for the lifetime of
/// a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceEntry {
    pub disease_tag: String,
    pub lesson: String,
    pub source_case: CaseId,
    pub batch_index: usize,
    pub dimension: Dimension,
}

/// The three critiques plus the machine-usable lessons extracted from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionReport {
    pub diagnostic_critique: String,
    pub examination_critique: String,
    pub treatment_critique: String,
    pub extracted_entries: Vec<ExperienceEntry>,
}

#[derive(Debug, Clone)]
pub struct PhysicianAgent {
    pub id: String,
    pub department: DepartmentId,
    pub experience: Vec<ExperienceEntry>,
}

impl PhysicianAgent {
    pub fn new(id: impl Into<String>, department: DepartmentId) -> Self {
        Self {
            id: id.into(),
            department,
            experience: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperienceStoreError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed experience entry: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct ExperienceLine {
    schema: String,
    #[serde(flatten)]
    entry: ExperienceEntry,
}

/// Appends entries to a physician's on-disk store. The file is append-only
/// structured text so interrupted runs can resume without losing lessons.
pub fn append_experience(
    path: impl AsRef<Path>,
    entries: &[ExperienceEntry],
) -> Result<(), ExperienceStoreError> {
    let path = path.as_ref();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| ExperienceStoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let mut writer = BufWriter::new(file);
    for entry in entries {
        let line = ExperienceLine {
            schema: EXPERIENCE_SCHEMA.to_string(),
            entry: entry.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer
            .write_all(b"\n")
            .map_err(|source| ExperienceStoreError::Io {
                path: path.display().to_string(),
                source,
            })?;
    }
    writer.flush().map_err(|source| ExperienceStoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_experience(path: impl AsRef<Path>) -> Result<Vec<ExperienceEntry>, ExperienceStoreError> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|source| ExperienceStoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|source| ExperienceStoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExperienceLine = serde_json::from_str(&line)?;
        entries.push(parsed.entry);
    }
    Ok(entries)
}
