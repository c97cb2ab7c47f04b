//! The six subcommands. Exit-code contract: 0 success, 1 usage/config error,
//! 2 partial progress (resumable).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use openhospital_core::arena::{build_roster, RunDirs, Runner};
use openhospital_core::domain::dataset::parse_record_line;
use openhospital_core::domain::{validate_record, CaseDataset, KnowledgeBase};
use openhospital_core::eval::{
    emit_trend_report, grouped_diversity, judge_rubric, self_bleu4, tfidf_diversity, MetricReport,
    Rubric,
};
use openhospital_core::gateway::{
    ChatProvider, Gateway, RecordingProvider, RemoteProvider, ReplayProvider, Script,
    ScriptedProvider, UsageLedger,
};
use openhospital_core::stable::sub_seed;
use openhospital_core::synth::{ingest_persona_seeds, synthesize_dataset, SynthError};

use crate::config::{Overrides, ProviderKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// A provider plus, when recording was requested, a handle to the recorder
/// for saving the transcript at the end of the command.
pub type ProviderHandle = (Arc<dyn ChatProvider>, Option<Arc<RecordingProvider>>);

/// Builds the configured provider, optionally wrapped in a recorder.
pub fn build_provider(config: &RunConfig, record: bool) -> Result<ProviderHandle> {
    let inner: Arc<dyn ChatProvider> = match config.provider.kind {
        ProviderKind::Scripted => {
            let script_path = config
                .provider
                .script
                .as_ref()
                .expect("validated: script present");
            config.require_path("provider.script", script_path)?;
            let script = Script::load(script_path)
                .with_context(|| format!("loading script {}", script_path.display()))?;
            Arc::new(ScriptedProvider::new(script))
        }
        ProviderKind::Remote => Arc::new(RemoteProvider::new(
            config
                .provider
                .base_url
                .clone()
                .expect("validated: base_url present"),
            &config.provider.api_key_env,
        )),
    };
    if record {
        let recorder = Arc::new(RecordingProvider::new(inner));
        Ok((recorder.clone(), Some(recorder)))
    } else {
        Ok((inner, None))
    }
}

fn load_run_inputs(config: &RunConfig) -> Result<(CaseDataset, KnowledgeBase)> {
    config.require_path("paths.dataset", &config.paths.dataset)?;
    config.require_path("paths.knowledge_base", &config.paths.knowledge_base)?;
    let dataset = CaseDataset::load(&config.paths.dataset)?
        .split(config.run.train_fraction, sub_seed(config.seed, "split"))?
        .into_batches(config.run.n_batches)?;
    let kb = KnowledgeBase::load(&config.paths.knowledge_base)?;
    Ok((dataset, kb))
}

/// `synth`: generate records into `paths.dataset` via the staged pipeline.
pub fn cmd_synth(config_path: &Path, n: usize, overrides: &Overrides) -> Result<i32> {
    let config = RunConfig::load(config_path, overrides)?;
    if n == 0 {
        bail!("--n: must be at least 1");
    }
    config.require_path("paths.knowledge_base", &config.paths.knowledge_base)?;
    config.require_path("paths.personas", &config.paths.personas)?;
    let kb = KnowledgeBase::load(&config.paths.knowledge_base)?;
    let ingest = ingest_persona_seeds(&config.paths.personas)?;
    if ingest.profiles.is_empty() {
        bail!(
            "paths.personas: no usable persona seeds in {} ({} rejected)",
            config.paths.personas.display(),
            ingest.rejected
        );
    }
    if let Some(parent) = config.paths.dataset.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let (provider, _) = build_provider(&config, false)?;
    let gateway = Gateway::new(provider, Arc::new(UsageLedger::new()));
    let result = synthesize_dataset(
        &kb,
        &ingest.profiles,
        n,
        &gateway,
        &config.synth_config(),
        &config.paths.dataset,
    );
    // Synthesis token accounting lands next to the records either way.
    gateway
        .ledger()
        .save(config.paths.dataset.with_extension("ledger.jsonl"))?;
    match result {
        Ok(report) => {
            println!(
                "synthesized {}/{} record(s) into {} (rejected {}, acceptance {:.1}%, \
                 {} input tokens)",
                report.accepted,
                report.requested,
                config.paths.dataset.display(),
                report.rejected,
                report.acceptance_rate * 100.0,
                gateway.ledger().total_input_tokens(None)
            );
            Ok(EXIT_OK)
        }
        Err(err @ (SynthError::Gateway(_) | SynthError::Io { .. })) => {
            eprintln!("synthesis interrupted ({err}); progress saved, rerun to resume");
            Ok(EXIT_PARTIAL)
        }
        Err(err) => Err(err.into()),
    }
}

fn parse_batch_range(spec: &str) -> Result<(usize, usize)> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().context("--batches: bad lower bound")?;
        let hi: usize = hi.trim().parse().context("--batches: bad upper bound")?;
        if lo == 0 || hi < lo {
            bail!("--batches: range must be 1-based and nonempty, got {spec:?}");
        }
        Ok((lo, hi))
    } else {
        let single: usize = spec.trim().parse().context("--batches: bad index")?;
        if single == 0 {
            bail!("--batches: indices are 1-based");
        }
        Ok((single, single))
    }
}

/// `run`: train over all batches with per-batch test evaluation, writing
/// reports, transcripts, and checkpoints under `paths.out_dir`.
pub fn cmd_run(
    config_path: &Path,
    batches: Option<&str>,
    record: bool,
    overrides: &Overrides,
) -> Result<i32> {
    let config = RunConfig::load(config_path, overrides)?;
    let range = batches.map(parse_batch_range).transpose()?;
    let (dataset, kb) = load_run_inputs(&config)?;
    let roster = build_roster(&kb.departments, config.run.physicians_per_department);
    let (provider, recorder) = build_provider(&config, record)?;
    let dirs = RunDirs::new(&config.paths.out_dir);
    let mut runner = Runner::new(
        dataset,
        kb,
        roster,
        provider,
        config.arena_config(),
        dirs,
        config.seed,
    )?;
    let result = runner.run(range);
    if let Some(recorder) = recorder {
        recorder.save(runner.dirs.recording_path())?;
    }
    match result {
        Ok(()) => {
            let (done, total) = (
                runner.state.history.len(),
                runner.dataset.batches.len() * 2,
            );
            println!(
                "run {}: {done}/{total} report(s) written to {}",
                if runner.state.completed {
                    "complete"
                } else {
                    "stopped at batch-range bound"
                },
                runner.dirs.reports_dir().display()
            );
            if !runner.state.case_failures.is_empty() {
                println!("{} case failure(s) recorded in state.json", runner.state.case_failures.len());
            }
            Ok(EXIT_OK)
        }
        Err(err) => {
            eprintln!("run interrupted ({err}); checkpoint saved, rerun to resume");
            Ok(EXIT_PARTIAL)
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalReport {
    schema: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    diversity: Option<DiversitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grouped_diversity: Option<GroupedSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistency: Option<ConsistencySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<ValidationSection>,
}

#[derive(Debug, Serialize)]
struct DiversitySection {
    n_docs: usize,
    self_bleu4: f64,
    tfidf_diversity: f64,
}

#[derive(Debug, Serialize)]
struct GroupedSection {
    mean_self_bleu4: f64,
    mean_tfidf_diversity: f64,
    groups: Vec<GroupRow>,
    skipped: Vec<String>,
}

#[derive(Debug, Serialize)]
struct GroupRow {
    question_id: String,
    n_responses: usize,
    self_bleu4: f64,
    tfidf_diversity: f64,
}

#[derive(Debug, Serialize)]
struct ConsistencySection {
    n_records: usize,
    n_judged: usize,
    n_failures: usize,
    mean_score: f64,
    per_record: Vec<(String, u8)>,
}

#[derive(Debug, Serialize)]
struct ValidationSection {
    n_records: usize,
    n_valid: usize,
    n_problems: usize,
    problems: Vec<String>,
}

const VALID_METRICS: &[&str] = &["diversity", "grouped-diversity", "consistency", "validation"];

/// `eval`: offline metrics over a file. `diversity` reads one document per
/// line; `grouped-diversity` reads JSON lines `{question_id, text}`;
/// `consistency` judges each record of a dataset file with the configured
/// judge model.
pub fn cmd_eval(
    config_path: &Path,
    input: &Path,
    metrics: &[String],
    out: Option<&Path>,
    overrides: &Overrides,
) -> Result<i32> {
    let config = RunConfig::load(config_path, overrides)?;
    if metrics.is_empty() {
        bail!("--metrics: none requested; valid names: {}", VALID_METRICS.join(", "));
    }
    for metric in metrics {
        if !VALID_METRICS.contains(&metric.as_str()) {
            bail!(
                "--metrics: unknown metric {metric:?}; valid names: {}",
                VALID_METRICS.join(", ")
            );
        }
    }
    config.require_path("--input", input)?;
    let text = fs::read_to_string(input)?;

    let mut report = EvalReport {
        schema: "eval-report/v1".to_string(),
        diversity: None,
        grouped_diversity: None,
        consistency: None,
        validation: None,
    };

    for metric in metrics {
        match metric.as_str() {
            "diversity" => {
                let docs: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
                let bleu = self_bleu4(&docs)?;
                let tfidf = tfidf_diversity(&docs)?;
                println!(
                    "diversity over {} doc(s): self_bleu4 {bleu:.6}, tfidf_diversity {tfidf:.6}",
                    docs.len()
                );
                report.diversity = Some(DiversitySection {
                    n_docs: docs.len(),
                    self_bleu4: bleu,
                    tfidf_diversity: tfidf,
                });
            }
            "grouped-diversity" => {
                let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let value: serde_json::Value = serde_json::from_str(line)
                        .with_context(|| format!("line {}: malformed JSON", i + 1))?;
                    let question_id = value
                        .get("question_id")
                        .and_then(|v| v.as_str())
                        .ok_or_else(|| anyhow!("line {}: missing question_id", i + 1))?;
                    let response = value
                        .get("text")
                        .and_then(|v| v.as_str())
                        .ok_or_else(|| anyhow!("line {}: missing text", i + 1))?;
                    groups
                        .entry(question_id.to_string())
                        .or_default()
                        .push(response.to_string());
                }
                let result = grouped_diversity(&groups)?;
                for skipped in &result.skipped {
                    eprintln!("warning: group {skipped:?} has fewer than 2 responses, skipped");
                }
                println!(
                    "grouped diversity over {} group(s): mean self_bleu4 {:.6}, mean tfidf_diversity {:.6}",
                    result.groups.len(),
                    result.mean_self_bleu4,
                    result.mean_tfidf_diversity
                );
                report.grouped_diversity = Some(GroupedSection {
                    mean_self_bleu4: result.mean_self_bleu4,
                    mean_tfidf_diversity: result.mean_tfidf_diversity,
                    groups: result
                        .groups
                        .into_iter()
                        .map(|g| GroupRow {
                            question_id: g.question_id,
                            n_responses: g.n_responses,
                            self_bleu4: g.self_bleu4,
                            tfidf_diversity: g.tfidf_diversity,
                        })
                        .collect(),
                    skipped: result.skipped,
                });
            }
            "validation" => {
                let scan = scan_records(&text);
                println!(
                    "validation over {} record(s): {} valid, {} problem(s)",
                    scan.n_records,
                    scan.n_valid,
                    scan.problems.len()
                );
                report.validation = Some(ValidationSection {
                    n_records: scan.n_records,
                    n_valid: scan.n_valid,
                    n_problems: scan.problems.len(),
                    problems: scan.problems,
                });
            }
            "consistency" => {
                let (provider, _) = build_provider(&config, false)?;
                let gateway = Gateway::new(provider, Arc::new(UsageLedger::new()));
                let judge_call = config.judge_call();
                let mut per_record = Vec::new();
                let mut failures = 0usize;
                let mut total = 0usize;
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record = parse_record_line(line)
                        .map_err(|e| anyhow!("line {}: {e}", i + 1))?;
                    total += 1;
                    let subject = serde_json::to_string_pretty(&record)?;
                    match judge_rubric(
                        &subject,
                        "",
                        Rubric::MedicalConsistency,
                        &gateway,
                        &judge_call,
                        record.id.as_str(),
                    ) {
                        Ok(result) => {
                            per_record.push((record.id.to_string(), result.scores["CONSISTENCY"]));
                        }
                        Err(_) => failures += 1,
                    }
                }
                let mean = if per_record.is_empty() {
                    0.0
                } else {
                    per_record.iter().map(|(_, s)| f64::from(*s)).sum::<f64>()
                        / per_record.len() as f64
                };
                println!(
                    "consistency over {total} record(s): mean {mean:.4} on a 1-5 scale ({failures} unparseable)",
                );
                report.consistency = Some(ConsistencySection {
                    n_records: total,
                    n_judged: per_record.len(),
                    n_failures: failures,
                    mean_score: mean,
                    per_record,
                });
            }
            _ => unreachable!("validated above"),
        }
    }

    let out_path = match out {
        Some(path) => path.to_path_buf(),
        None => {
            fs::create_dir_all(&config.paths.out_dir)?;
            config.paths.out_dir.join("eval_report.json")
        }
    };
    fs::write(&out_path, serde_json::to_string_pretty(&report)?)?;
    println!("evaluation report written to {}", out_path.display());
    Ok(EXIT_OK)
}

/// `report`: render the trend table and charts from every metric report in a
/// run directory.
pub fn cmd_report(
    run_dir: Option<&Path>,
    config_path: Option<&Path>,
    overrides: &Overrides,
) -> Result<i32> {
    let root = match (run_dir, config_path) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(config_path)) => {
            RunConfig::load(config_path, overrides)?.paths.out_dir
        }
        (None, None) => bail!("--run-dir or --config required"),
    };
    let dirs = RunDirs::new(&root);
    let reports_dir = dirs.reports_dir();
    if !reports_dir.exists() {
        bail!("--run-dir: {} has no reports directory", root.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&reports_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut history = Vec::new();
    for path in &paths {
        history.push(MetricReport::load(path)?);
    }
    if history.is_empty() {
        bail!("--run-dir: no metric reports found under {}", reports_dir.display());
    }
    let files = emit_trend_report(&history, dirs.trend_dir())?;
    println!(
        "trend report over {} metric report(s): {} file(s) in {}",
        history.len(),
        files.len(),
        dirs.trend_dir().display()
    );
    Ok(EXIT_OK)
}

/// Result of the lenient dataset scan: every problem is collected instead of
/// stopping at the first.
struct RecordScan {
    n_records: usize,
    n_valid: usize,
    problems: Vec<String>,
}

fn scan_records(text: &str) -> RecordScan {
    let mut problems = Vec::new();
    let mut n_records = 0usize;
    let mut n_valid = 0usize;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record_line(line) {
            Err(err) => problems.push(format!("line {line_no}: {err}")),
            Ok(record) => {
                n_records += 1;
                let mut clean = true;
                if let Some(first) = seen.insert(record.id.to_string(), line_no) {
                    problems.push(format!(
                        "line {line_no}: duplicate record id {:?} (first on line {first})",
                        record.id.to_string()
                    ));
                    clean = false;
                }
                for violation in validate_record(&record) {
                    problems.push(format!("line {line_no}: record {}: {violation}", record.id));
                    clean = false;
                }
                if clean {
                    n_valid += 1;
                }
            }
        }
    }
    RecordScan {
        n_records,
        n_valid,
        problems,
    }
}

/// `validate`: lenient scan of a dataset file (every problem reported, not
/// just the first) plus knowledge-base validation when the path exists.
pub fn cmd_validate(
    config_path: &Path,
    dataset_override: Option<&Path>,
    overrides: &Overrides,
) -> Result<i32> {
    let config = RunConfig::load(config_path, overrides)?;
    let dataset_path = dataset_override.unwrap_or(&config.paths.dataset);
    config.require_path("paths.dataset", dataset_path)?;
    let text = fs::read_to_string(dataset_path)?;

    let scan = scan_records(&text);
    for problem in &scan.problems {
        println!("{problem}");
    }
    let mut problems = scan.problems.len();

    if config.paths.knowledge_base.exists() {
        match KnowledgeBase::load(&config.paths.knowledge_base) {
            Ok(_) => println!(
                "knowledge base {} is valid",
                config.paths.knowledge_base.display()
            ),
            Err(err) => {
                println!("knowledge base: {err}");
                problems += 1;
            }
        }
    }

    println!("validated {} record(s): {problems} problem(s)", scan.n_records);
    Ok(if problems == 0 { EXIT_OK } else { EXIT_CONFIG })
}

fn compare_tree(original: &Path, replayed: &Path, rel: &str) -> Result<(usize, Vec<String>)> {
    let mut checked = 0usize;
    let mut diffs = Vec::new();
    let dir_a = original.join(rel);
    let dir_b = replayed.join(rel);
    let mut names: Vec<String> = Vec::new();
    if dir_a.exists() {
        for entry in fs::read_dir(&dir_a)? {
            names.push(entry?.file_name().to_string_lossy().to_string());
        }
    }
    names.sort();
    for name in names {
        checked += 1;
        let a = fs::read(dir_a.join(&name))?;
        let b = fs::read(dir_b.join(&name)).unwrap_or_default();
        if a != b {
            diffs.push(format!("{rel}/{name}"));
        }
    }
    Ok((checked, diffs))
}

/// `replay`: re-execute a recorded run against the stored gateway transcript
/// and verify the outputs are byte-identical to the original run directory.
pub fn cmd_replay(
    config_path: &Path,
    recording: Option<&Path>,
    out_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<i32> {
    let config = RunConfig::load(config_path, overrides)?;
    let original_dir = config.paths.out_dir.clone();
    let recording_path = recording
        .map(Path::to_path_buf)
        .unwrap_or_else(|| RunDirs::new(&original_dir).recording_path());
    config.require_path("--recording", &recording_path)?;
    let replay_dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}-replay", original_dir.display())));

    let (dataset, kb) = load_run_inputs(&config)?;
    let roster = build_roster(&kb.departments, config.run.physicians_per_department);
    let provider = Arc::new(ReplayProvider::load(&recording_path)?);
    let mut runner = Runner::new(
        dataset,
        kb,
        roster,
        provider,
        config.arena_config(),
        RunDirs::new(&replay_dir),
        config.seed,
    )?;
    runner.run(None)?;

    let mut checked = 0usize;
    let mut diffs = Vec::new();
    for rel in ["transcripts", "reports"] {
        let (n, mut d) = compare_tree(&original_dir, &replay_dir, rel)?;
        checked += n;
        diffs.append(&mut d);
    }
    let ledger_a = fs::read(original_dir.join("ledger.jsonl"))?;
    let ledger_b = fs::read(replay_dir.join("ledger.jsonl"))?;
    checked += 1;
    if ledger_a != ledger_b {
        diffs.push("ledger.jsonl".to_string());
    }

    if diffs.is_empty() {
        println!("replay verified: {checked} file(s) byte-identical");
        Ok(EXIT_OK)
    } else {
        eprintln!("replay diverged in {} of {checked} file(s):", diffs.len());
        for diff in diffs {
            eprintln!("  {diff}");
        }
        Ok(EXIT_CONFIG)
    }
}
