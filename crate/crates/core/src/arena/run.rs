//! Checkpointed batch execution. Training batches run route → episode →
//! score → reflect per case; after every batch the roster is evaluated on the
//! held-out test split without reflection or gold exposure. State is
//! serialized after every case so a crashed run resumes without re-running
//! finished cases or double-counting the ledger.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{CaseDataset, CaseId, KnowledgeBase};
use crate::embedding::{default_embedder, Embedder};
use crate::eval::judge::JudgeError;
use crate::eval::{
    aggregate, diagnostic_accuracy, examination_precision, treatment_alignment, CaseScores,
    MetricReport, Phase,
};
use crate::gateway::{ChatProvider, Gateway, UsageLedger};
use crate::physician::ops::{ReflectionOutcome, ReflectionScores};
use crate::physician::{append_experience, load_experience, reflect, PhysicianAgent};

use super::episode::run_episode;
use super::router::Router;
use super::{save_transcript, ActionEvent, ArenaConfig, ArenaError, EventBody};

pub const STATE_SCHEMA: &str = "run-state/v1";

/// Layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunDirs {
    pub root: PathBuf,
}

impl RunDirs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join("state.json")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.root.join("ledger.jsonl")
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn experience_dir(&self) -> PathBuf {
        self.root.join("experience")
    }

    pub fn trend_dir(&self) -> PathBuf {
        self.root.join("trend")
    }

    pub fn recording_path(&self) -> PathBuf {
        self.root.join("gateway_record.jsonl")
    }

    fn sanitize(id: &str) -> String {
        id.chars()
            .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' })
            .collect()
    }

    pub fn transcript_path(&self, case_id: &CaseId, phase: Phase, batch_index: usize) -> PathBuf {
        let stem = Self::sanitize(case_id.as_str());
        match phase {
            Phase::Train => self.transcripts_dir().join(format!("{stem}.jsonl")),
            Phase::Test => self
                .transcripts_dir()
                .join(format!("{stem}.test-b{batch_index:03}.jsonl")),
        }
    }

    pub fn report_path(&self, batch_index: usize, phase: Phase) -> PathBuf {
        self.reports_dir()
            .join(format!("batch_{batch_index:03}_{}.json", phase.as_str()))
    }

    pub fn experience_path(&self, physician_id: &str) -> PathBuf {
        self.experience_dir()
            .join(format!("{}.jsonl", Self::sanitize(physician_id)))
    }

    fn ensure(&self) -> Result<(), ArenaError> {
        for dir in [
            self.root.clone(),
            self.transcripts_dir(),
            self.reports_dir(),
            self.experience_dir(),
        ] {
            fs::create_dir_all(&dir).map_err(|source| ArenaError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    /// Clears run outputs for a fresh start (stale files from an earlier run
    /// must not leak into a new one).
    fn clean(&self) -> Result<(), ArenaError> {
        for dir in [self.transcripts_dir(), self.reports_dir(), self.experience_dir()] {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|source| ArenaError::Io {
                    path: dir.display().to_string(),
                    source,
                })?;
            }
        }
        for file in [self.ledger_path(), self.state_path()] {
            if file.exists() {
                fs::remove_file(&file).map_err(|source| ArenaError::Io {
                    path: file.display().to_string(),
                    source,
                })?;
            }
        }
        self.ensure()
    }
}

/// Persistent cursor over the run: which batch, how far into its training
/// cases and the post-batch test pass, the per-batch partial scores, finished
/// reports, and the ledger fence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunState {
    pub schema: String,
    pub seed: u64,
    pub batch_index: usize,
    pub train_cursor: usize,
    pub train_done: bool,
    pub test_cursor: usize,
    pub train_partial: Vec<CaseScores>,
    pub test_partial: Vec<CaseScores>,
    pub history: Vec<MetricReport>,
    pub ledger_len: usize,
    pub router_counters: BTreeMap<String, usize>,
    pub case_failures: Vec<String>,
    pub completed: bool,
}

impl RunState {
    fn fresh(seed: u64) -> Self {
        Self {
            schema: STATE_SCHEMA.to_string(),
            seed,
            batch_index: 1,
            train_cursor: 0,
            train_done: false,
            test_cursor: 0,
            train_partial: Vec::new(),
            test_partial: Vec::new(),
            history: Vec::new(),
            ledger_len: 0,
            router_counters: BTreeMap::new(),
            case_failures: Vec::new(),
            completed: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ArenaError> {
        let text = fs::read_to_string(path).map_err(|source| ArenaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, path: &Path) -> Result<(), ArenaError> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| ArenaError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Owns everything a run needs and drives it batch by batch.
pub struct Runner {
    pub dataset: CaseDataset,
    pub kb: KnowledgeBase,
    pub roster: Vec<PhysicianAgent>,
    pub gateway: Gateway,
    pub config: ArenaConfig,
    pub dirs: RunDirs,
    pub state: RunState,
    router: Router,
    embed: Embedder,
}

impl Runner {
    /// Builds a fresh runner or resumes from the run directory's checkpoint.
    /// On resume the ledger is reloaded and fenced to the checkpointed
    /// length, the router rotation continues, and every physician's
    /// experience store is reloaded from disk.
    pub fn new(
        dataset: CaseDataset,
        kb: KnowledgeBase,
        mut roster: Vec<PhysicianAgent>,
        provider: Arc<dyn ChatProvider>,
        config: ArenaConfig,
        dirs: RunDirs,
        seed: u64,
    ) -> Result<Self, ArenaError> {
        dirs.ensure()?;
        let resume = dirs.state_path().exists();
        let (state, ledger) = if resume {
            let state = RunState::load(&dirs.state_path())?;
            let ledger = if dirs.ledger_path().exists() {
                let loaded = UsageLedger::load(dirs.ledger_path())?;
                loaded.truncate(state.ledger_len);
                loaded.save(dirs.ledger_path())?;
                loaded
            } else {
                UsageLedger::new()
            };
            for physician in &mut roster {
                physician.experience = load_experience(dirs.experience_path(&physician.id))?;
            }
            (state, ledger)
        } else {
            dirs.clean()?;
            (RunState::fresh(seed), UsageLedger::new())
        };
        let router = Router::from_counters(state.router_counters.clone());
        let gateway = Gateway::new(provider, Arc::new(ledger));
        Ok(Self {
            dataset,
            kb,
            roster,
            gateway,
            config,
            dirs,
            state,
            router,
            embed: default_embedder(),
        })
    }

    pub fn ledger(&self) -> &Arc<UsageLedger> {
        self.gateway.ledger()
    }

    fn checkpoint(&mut self) -> Result<(), ArenaError> {
        self.state.router_counters = self.router.counters().clone();
        self.state.ledger_len = self.gateway.ledger().len();
        self.gateway.ledger().save(self.dirs.ledger_path())?;
        self.state.save(&self.dirs.state_path())
    }

    fn reported(&self, batch_index: usize, phase: Phase) -> Option<MetricReport> {
        self.state
            .history
            .iter()
            .find(|r| r.batch_index == batch_index && r.phase == phase)
            .cloned()
    }

    /// Runs every batch (optionally restricted to an inclusive index range),
    /// each followed by a test evaluation. A completed run is a no-op.
    /// Batches always execute in order: a range starting past the next
    /// unfinished batch is an error, never a silent skip.
    pub fn run(&mut self, batch_range: Option<(usize, usize)>) -> Result<(), ArenaError> {
        if self.state.completed {
            return Ok(());
        }
        if self.roster.is_empty() {
            return Err(ArenaError::UnknownDepartment(
                "roster is empty".to_string(),
            ));
        }
        if let Some((lo, _)) = batch_range {
            if lo > self.state.batch_index {
                return Err(ArenaError::BatchOrder(format!(
                    "cannot start at batch {lo} while batch {} is the next unfinished one",
                    self.state.batch_index
                )));
            }
        }
        let batch_indices: Vec<usize> = self.dataset.batches.iter().map(|b| b.index).collect();
        let last = *batch_indices.last().expect("dataset has batches");
        for index in batch_indices {
            if index < self.state.batch_index {
                continue;
            }
            if let Some((_, hi)) = batch_range {
                if index > hi {
                    break;
                }
            }
            self.run_batch(index)?;
            self.evaluate_on_test(index)?;
            self.state.batch_index = index + 1;
            self.state.train_cursor = 0;
            self.state.train_done = false;
            self.state.test_cursor = 0;
            self.state.train_partial.clear();
            self.state.test_partial.clear();
            self.checkpoint()?;
        }
        if self.state.batch_index > last {
            self.state.completed = true;
            self.checkpoint()?;
        }
        Ok(())
    }

    /// Trains the roster on one batch and writes its train report. Calling
    /// it again for an already-reported batch returns the existing report.
    pub fn run_batch(&mut self, batch_index: usize) -> Result<MetricReport, ArenaError> {
        if let Some(existing) = self.reported(batch_index, Phase::Train) {
            return Ok(existing);
        }
        if self.roster.is_empty() {
            return Err(ArenaError::UnknownDepartment(
                "roster is empty".to_string(),
            ));
        }
        let case_ids: Vec<CaseId> = self
            .dataset
            .batches
            .iter()
            .find(|b| b.index == batch_index)
            .map(|b| b.case_ids.clone())
            .unwrap_or_default();
        if !self.state.train_done {
            for (i, case_id) in case_ids.iter().enumerate() {
                if i < self.state.train_cursor {
                    continue;
                }
                let scores = self.process_case_or_record_failure(case_id, Phase::Train, batch_index)?;
                self.state.train_partial.push(scores);
                self.state.train_cursor = i + 1;
                self.checkpoint()?;
            }
            self.state.train_done = true;
        }
        let tokens: u64 = self.state.train_partial.iter().map(|s| s.input_tokens).sum();
        let report = aggregate(&self.state.train_partial, tokens, batch_index, Phase::Train);
        report.save(self.dirs.report_path(batch_index, Phase::Train))?;
        self.state.history.push(report.clone());
        self.checkpoint()?;
        Ok(report)
    }

    /// Evaluates the current roster on the test split: no reflection, no
    /// gold exposure, experience stores untouched. Idempotent per batch.
    pub fn evaluate_on_test(&mut self, batch_index: usize) -> Result<MetricReport, ArenaError> {
        if let Some(existing) = self.reported(batch_index, Phase::Test) {
            return Ok(existing);
        }
        if self.roster.is_empty() {
            return Err(ArenaError::UnknownDepartment(
                "roster is empty".to_string(),
            ));
        }
        if self.dataset.test_ids.is_empty() {
            return Err(ArenaError::Dataset(
                crate::domain::DatasetError::MissingSplit,
            ));
        }
        let test_ids = self.dataset.test_ids.clone();
        for (i, case_id) in test_ids.iter().enumerate() {
            if i < self.state.test_cursor {
                continue;
            }
            let scores = self.process_case_or_record_failure(case_id, Phase::Test, batch_index)?;
            self.state.test_partial.push(scores);
            self.state.test_cursor = i + 1;
            self.checkpoint()?;
        }
        let tokens: u64 = self.state.test_partial.iter().map(|s| s.input_tokens).sum();
        let report = aggregate(&self.state.test_partial, tokens, batch_index, Phase::Test);
        report.save(self.dirs.report_path(batch_index, Phase::Test))?;
        self.state.history.push(report.clone());
        self.checkpoint()?;
        Ok(report)
    }

    fn process_case_or_record_failure(
        &mut self,
        case_id: &CaseId,
        phase: Phase,
        batch_index: usize,
    ) -> Result<CaseScores, ArenaError> {
        let ledger_start = self.gateway.ledger().len();
        match self.process_case(case_id, phase, batch_index, ledger_start) {
            Ok(scores) => Ok(scores),
            // A failed case scores zero and the batch continues; checkpoint
            // IO failures abort the run.
            Err(err @ (ArenaError::Io { .. } | ArenaError::Malformed(_))) => Err(err),
            Err(err) => {
                self.state
                    .case_failures
                    .push(format!("{case_id} ({}): {err}", phase.as_str()));
                Ok(CaseScores {
                    exam_precision: 0.0,
                    diag_accuracy: 0,
                    treatment_alignment: Some(0.0),
                    input_tokens: self.gateway.ledger().input_tokens_from(ledger_start, None),
                })
            }
        }
    }

    fn process_case(
        &mut self,
        case_id: &CaseId,
        phase: Phase,
        batch_index: usize,
        ledger_start: usize,
    ) -> Result<CaseScores, ArenaError> {
        let record = self.dataset.require(case_id)?.clone();
        let owner = self.router.route_case(&record, &self.roster)?;
        let (outcome, mut events) = run_episode(
            &record,
            &self.roster[owner],
            &self.roster,
            &self.kb,
            &self.gateway,
            &self.config,
            &self.embed,
        )?;

        let exam_precision = examination_precision(
            outcome.ordered_exams.iter().map(String::as_str),
            record.objective.gold_exams.iter().map(String::as_str),
        );
        let diag_accuracy = diagnostic_accuracy(
            &outcome.final_diagnosis,
            &record.objective.gold_diagnosis,
            self.config.synonyms.as_ref(),
        );
        let alignment = if outcome.treatment_plan.is_empty() {
            Some(0.0)
        } else {
            match treatment_alignment(
                &outcome.treatment_plan,
                &record.objective.gold_treatment,
                &self.gateway,
                &self.config.judge_call,
                case_id.as_str(),
            ) {
                Ok((value, _)) => Some(value),
                Err(JudgeError::Parse { .. }) => None,
                Err(JudgeError::Gateway(g)) => return Err(g.into()),
            }
        };

        if phase == Phase::Train && self.config.reflection {
            let reflection_outcome = ReflectionOutcome {
                final_diagnosis: outcome.final_diagnosis.clone(),
                ordered_exams: outcome.ordered_exams.iter().cloned().collect(),
                treatment_plan: outcome.treatment_plan.clone(),
            };
            let reflection_scores = ReflectionScores {
                exam_precision,
                diag_accuracy: f64::from(diag_accuracy),
                treatment_alignment: alignment.unwrap_or(0.0),
            };
            match reflect(
                &mut self.roster[owner],
                &reflection_outcome,
                &record,
                &reflection_scores,
                batch_index,
                &self.gateway,
                &self.config.agent_call,
            ) {
                Ok((report, usage)) => {
                    let next_turn = events.last().map_or(1, |e| e.turn + 1);
                    events.push(ActionEvent {
                        turn: next_turn,
                        actor: self.roster[owner].id.clone(),
                        body: EventBody::Reflection {
                            lessons: report.extracted_entries.len(),
                        },
                        observation: format!(
                            "self-critique recorded; {} lesson(s) extracted",
                            report.extracted_entries.len()
                        ),
                        usage,
                    });
                    append_experience(
                        self.dirs.experience_path(&self.roster[owner].id),
                        &report.extracted_entries,
                    )?;
                    if self.config.shared_experience && !report.extracted_entries.is_empty() {
                        let owner_id = self.roster[owner].id.clone();
                        let department = self.roster[owner].department.clone();
                        let entries = report.extracted_entries.clone();
                        for i in 0..self.roster.len() {
                            if self.roster[i].department == department
                                && self.roster[i].id != owner_id
                            {
                                self.roster[i].experience.extend(entries.iter().cloned());
                                append_experience(
                                    self.dirs.experience_path(&self.roster[i].id),
                                    &entries,
                                )?;
                            }
                        }
                    }
                }
                Err(err) => {
                    // Reflection is best-effort: skipped on gateway errors,
                    // experience untouched.
                    self.state
                        .case_failures
                        .push(format!("{case_id} (reflection skipped): {err}"));
                }
            }
        }

        save_transcript(
            self.dirs.transcript_path(case_id, phase, batch_index),
            &events,
        )?;
        Ok(CaseScores {
            exam_precision,
            diag_accuracy,
            treatment_alignment: alignment,
            input_tokens: self.gateway.ledger().input_tokens_from(ledger_start, None),
        })
    }
}
