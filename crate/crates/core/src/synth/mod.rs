//! Multi-stage synthesis of patient records from the knowledge base and the
//! persona seed library, with an iterative validate-and-repair refinement
//! loop. Stages: subjective ontology, then objective findings, then the
//! ground-truth assessment — each its own gateway call with the prior stages
//! in context.

pub mod draft;
pub mod persona;
pub mod pipeline;
pub mod refine;
pub mod sampler;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DepartmentId, PatientRecord, PersonaProfile};
use crate::gateway::GatewayError;

pub use draft::draft_record;
pub use persona::{ingest_persona_seeds, PersonaIngest, SENSITIVE_ATTRIBUTES};
pub use pipeline::{synthesize_dataset, SynthConfig, SynthProgress, SynthReport};
pub use refine::{refine, RefineOutcome};
pub use sampler::sample_case_spec;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("knowledge base has no diseases to sample from")]
    EmptyKnowledgeBase,
    #[error("comorbidity rate must lie in [0, 1], got {0}")]
    BadComorbidityRate(f64),
    #[error("no persona seeds available")]
    NoPersonas,
    #[error("stage {stage} reply unparseable after {attempts} attempt(s): {detail}")]
    StageParse {
        stage: &'static str,
        attempts: u32,
        detail: String,
    },
    #[error("draft rejected after {iterations} refinement iteration(s): {issues} issue(s) remain")]
    Rejected { iterations: u32, issues: usize },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output conflict at {path}: {detail}")]
    OutputConflict { path: String, detail: String },
    #[error("malformed file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Everything needed to synthesize one case, fully determined by the sampler
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub primary_disease: String,
    pub comorbidity: Option<String>,
    pub persona_seed: PersonaProfile,
    pub department: DepartmentId,
    pub rng_seed: u64,
}

/// A record under construction: the partial record, the open issues from the
/// last validation pass, and the refinement iteration counter.
#[derive(Debug, Clone)]
pub struct DraftRecord {
    pub record: PatientRecord,
    pub issues: Vec<String>,
    pub iteration: u32,
}
