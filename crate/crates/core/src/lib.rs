//! An interactive clinical arena: physician agents diagnose and treat
//! synthetic patient agents under information asymmetry, accumulate
//! experience through post-case reflection, and are benchmarked batch by
//! batch on medical capability and system-efficiency metrics.
//!
//! Module map:
//! - [`domain`] — records, datasets, knowledge base, split/batch plumbing
//! - [`gateway`] — chat-completion providers, usage ledger, record/replay
//! - [`patient`] — the patient agent behind the epistemic boundary
//! - [`physician`] — action space, experience memory, reflection
//! - [`arena`] — episode loop, batch runner, checkpointed run state
//! - [`eval`] — capability metrics, diversity suite, judge rubrics, reports
//! - [`synth`] — multi-stage record synthesis with validate-and-repair
//! - [`embedding`] — deterministic hashed bag-of-words retrieval support

pub mod arena;
pub mod domain;
pub mod embedding;
pub mod eval;
pub mod gateway;
pub mod patient;
pub mod physician;
pub mod prompts;
pub mod stable;
pub mod synth;

pub use domain::{CaseDataset, CaseId, DepartmentId, KnowledgeBase, PatientRecord};
pub use gateway::{ChatMessage, ChatRequest, ChatResponse, Gateway, Purpose, TokenUsage, UsageLedger};
pub use physician::{Action, PhysicianAgent};
