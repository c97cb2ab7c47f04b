//! End-to-end dataset synthesis: sample specs, draft, refine, and stream
//! accepted records to disk in spec order with a resumable progress marker.
//! Drafting is parallelizable across specs (they are independent); output
//! assembly stays in spec order regardless of worker count.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::dataset::write_record_line;
use crate::domain::{CaseId, KnowledgeBase, PersonaProfile};
use crate::gateway::{CallSettings, Gateway};
use crate::stable::stable_hash64;

use super::draft::draft_record;
use super::refine::refine;
use super::{sample_case_spec, SynthError};

pub const PROGRESS_SCHEMA: &str = "synth-progress/v1";
pub const SYNTH_REPORT_SCHEMA: &str = "synth-report/v1";

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub comorbidity_rate: f64,
    pub max_refine_iters: u32,
    pub call: CallSettings,
    /// Worker count for the drafting phase; 1 keeps the run fully
    /// deterministic and is required for scripted providers.
    pub workers: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            comorbidity_rate: 0.15,
            max_refine_iters: 3,
            call: CallSettings::default(),
            workers: 1,
        }
    }
}

/// Progress marker persisted after every spec so an interrupted run resumes
/// without regenerating finished records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthProgress {
    pub schema: String,
    pub completed_specs: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejected_seeds: Vec<u64>,
}

impl SynthProgress {
    fn fresh() -> Self {
        Self {
            schema: PROGRESS_SCHEMA.to_string(),
            completed_specs: 0,
            accepted: 0,
            rejected: 0,
            rejected_seeds: Vec::new(),
        }
    }

    fn load_or_fresh(path: &Path) -> Result<Self, SynthError> {
        if !path.exists() {
            return Ok(Self::fresh());
        }
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, path: &Path) -> Result<(), SynthError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Final synthesis accounting written next to the record file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthReport {
    pub schema: String,
    pub requested: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub acceptance_rate: f64,
    pub total_refine_iterations: u64,
    pub rejected_seeds: Vec<u64>,
}

/// Deterministic per-spec seed derived from the run seed and spec index.
pub fn spec_seed(seed: u64, index: usize) -> u64 {
    stable_hash64(&[
        &seed.to_le_bytes(),
        b"sampler",
        &(index as u64).to_le_bytes(),
    ])
}

fn synthesize_one(
    kb: &KnowledgeBase,
    personas: &[PersonaProfile],
    index: usize,
    config: &SynthConfig,
    gateway: &Gateway,
) -> Result<(crate::domain::PatientRecord, u32), SynthError> {
    let rng_seed = spec_seed(config.seed, index);
    let spec = sample_case_spec(kb, personas, rng_seed, config.comorbidity_rate)?;
    let disease = kb
        .disease(&spec.primary_disease)
        .expect("sampled disease exists in kb")
        .clone();
    let draft = draft_record(
        &spec,
        CaseId::new(format!("S-{index:05}")),
        &disease.typical_symptoms,
        &disease.standard_exams,
        &disease.guideline_treatment,
        gateway,
        &config.call,
    )?;
    let outcome = refine(draft, &disease, gateway, &config.call, config.max_refine_iters)?;
    Ok((outcome.record, outcome.iterations))
}

/// Synthesizes up to `n` records into `records_path` (line-delimited record
/// format) and writes the synthesis report next to it. Returns the report.
/// Rerunning after an interruption continues from the progress marker; a
/// finished run is a no-op.
pub fn synthesize_dataset(
    kb: &KnowledgeBase,
    personas: &[PersonaProfile],
    n: usize,
    gateway: &Gateway,
    config: &SynthConfig,
    records_path: impl AsRef<Path>,
) -> Result<SynthReport, SynthError> {
    let records_path = records_path.as_ref();
    let progress_path = progress_path_for(records_path);
    // Refuse to touch files this pipeline does not own: a record file with
    // no progress marker was not produced by an interrupted synthesis.
    if records_path.exists() && !progress_path.exists() {
        return Err(SynthError::OutputConflict {
            path: records_path.display().to_string(),
            detail: "record file exists without a synthesis progress marker; move or remove it \
                     first"
                .to_string(),
        });
    }
    if progress_path.exists() && !records_path.exists() {
        return Err(SynthError::OutputConflict {
            path: progress_path.display().to_string(),
            detail: "progress marker exists but the record file is gone; remove the marker to \
                     restart"
                .to_string(),
        });
    }
    let mut progress = SynthProgress::load_or_fresh(&progress_path)?;
    if records_path.exists() {
        // Fence against a crash between a record write and the marker
        // advance: keep exactly the accepted lines the marker vouches for.
        let text = std::fs::read_to_string(records_path).map_err(|source| SynthError::Io {
            path: records_path.display().to_string(),
            source,
        })?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() > progress.accepted {
            let fenced: String = lines[..progress.accepted]
                .iter()
                .map(|l| format!("{l}\n"))
                .collect();
            std::fs::write(records_path, fenced).map_err(|source| SynthError::Io {
                path: records_path.display().to_string(),
                source,
            })?;
        }
    }

    let mut total_refine_iterations = 0u64;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(records_path)
        .map_err(|source| SynthError::Io {
            path: records_path.display().to_string(),
            source,
        })?;
    let mut writer = BufWriter::new(file);

    type SpecResult = Result<(crate::domain::PatientRecord, u32), SynthError>;
    let pending: Vec<usize> = (progress.completed_specs..n).collect();
    let results: Vec<(usize, SpecResult)> =
        if config.workers <= 1 {
            pending
                .iter()
                .map(|&i| (i, synthesize_one(kb, personas, i, config, gateway)))
                .collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .expect("worker pool");
            pool.install(|| {
                pending
                    .par_iter()
                    .map(|&i| (i, synthesize_one(kb, personas, i, config, gateway)))
                    .collect()
            })
        };

    for (index, result) in results {
        match result {
            Ok((record, iterations)) => {
                total_refine_iterations += u64::from(iterations);
                write_record_line(&mut writer, &record).map_err(|source| SynthError::Io {
                    path: records_path.display().to_string(),
                    source,
                })?;
                writer.flush().map_err(|source| SynthError::Io {
                    path: records_path.display().to_string(),
                    source,
                })?;
                progress.accepted += 1;
            }
            Err(SynthError::Rejected { .. } | SynthError::StageParse { .. }) => {
                progress.rejected += 1;
                progress.rejected_seeds.push(spec_seed(config.seed, index));
            }
            // Gateway outages and IO failures abort; the marker still points
            // at the last completed spec, so the run resumes there.
            Err(fatal) => {
                progress.save(&progress_path)?;
                return Err(fatal);
            }
        }
        progress.completed_specs = index + 1;
        progress.save(&progress_path)?;
    }

    let report = SynthReport {
        schema: SYNTH_REPORT_SCHEMA.to_string(),
        requested: n,
        accepted: progress.accepted,
        rejected: progress.rejected,
        acceptance_rate: if n == 0 {
            0.0
        } else {
            progress.accepted as f64 / n as f64
        },
        total_refine_iterations,
        rejected_seeds: progress.rejected_seeds.clone(),
    };
    let report_path = report_path_for(records_path);
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&report_path, text).map_err(|source| SynthError::Io {
        path: report_path.display().to_string(),
        source,
    })?;
    Ok(report)
}

pub fn progress_path_for(records_path: &Path) -> PathBuf {
    records_path.with_extension("progress.json")
}

pub fn report_path_for(records_path: &Path) -> PathBuf {
    records_path.with_extension("report.json")
}

/// Convenience used by tests and the CLI: load back what synthesis wrote.
pub fn load_synth_report(records_path: &Path) -> Result<SynthReport, SynthError> {
    let path = report_path_for(records_path);
    let text = std::fs::read_to_string(&path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
