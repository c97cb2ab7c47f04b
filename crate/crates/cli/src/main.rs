use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use openhospital_cli::config::{Overrides, ProviderKind};
use openhospital_cli::{cmd_eval, cmd_replay, cmd_report, cmd_run, cmd_synth, cmd_validate};

#[derive(Parser)]
#[command(
    name = "openhospital",
    version,
    about = "Clinical multi-agent arena: synthesize cases, run evolution batches, evaluate, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OverrideArgs {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the provider kind (scripted | remote).
    #[arg(long)]
    provider: Option<String>,
    /// Override the script path for the scripted provider.
    #[arg(long)]
    script: Option<PathBuf>,
}

impl OverrideArgs {
    fn into_overrides(self, out_dir: Option<PathBuf>) -> anyhow::Result<Overrides> {
        let provider = match self.provider.as_deref() {
            None => None,
            Some("scripted") => Some(ProviderKind::Scripted),
            Some("remote") => Some(ProviderKind::Remote),
            Some(other) => anyhow::bail!("--provider: {other:?} is not scripted|remote"),
        };
        Ok(Overrides {
            seed: self.seed,
            workers: self.workers,
            provider,
            script: self.script,
            out_dir,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize patient records into the configured dataset path.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// How many records to synthesize.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run all training batches with per-batch test evaluation.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict execution to a 1-based inclusive batch range, e.g. 1..3.
        #[arg(long)]
        batches: Option<String>,
        /// Record all gateway traffic for later replay.
        #[arg(long)]
        record: bool,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Compute offline metrics (diversity, grouped-diversity, consistency)
    /// over a file.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated metric names.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Where to write the evaluation report (default: out_dir/eval_report.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Render the trend table and charts from a run directory.
    Report {
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Validate a dataset file (and the knowledge base) without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Validate this file instead of the configured dataset path.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Re-execute a recorded run and verify byte-identical outputs.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// Recorded gateway transcript (default: out_dir/gateway_record.jsonl).
        #[arg(long)]
        recording: Option<PathBuf>,
        /// Where the replay writes its outputs (default: <out_dir>-replay).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            config,
            n,
            overrides,
        } => cmd_synth(&config, n, &overrides.into_overrides(None)?),
        Command::Run {
            config,
            batches,
            record,
            overrides,
        } => cmd_run(
            &config,
            batches.as_deref(),
            record,
            &overrides.into_overrides(None)?,
        ),
        Command::Eval {
            config,
            input,
            metrics,
            out,
            overrides,
        } => cmd_eval(
            &config,
            &input,
            &metrics,
            out.as_deref(),
            &overrides.into_overrides(None)?,
        ),
        Command::Report {
            run_dir,
            config,
            overrides,
        } => cmd_report(
            run_dir.as_deref(),
            config.as_deref(),
            &overrides.into_overrides(None)?,
        ),
        Command::Validate {
            config,
            dataset,
            overrides,
        } => cmd_validate(&config, dataset.as_deref(), &overrides.into_overrides(None)?),
        Command::Replay {
            config,
            recording,
            out_dir,
            overrides,
        } => cmd_replay(
            &config,
            recording.as_deref(),
            out_dir.as_deref(),
            &overrides.into_overrides(None)?,
        ),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
