//! Run configuration: one structured file drives every command, with a
//! schema-version field and flag overrides. All randomness flows from the
//! single `seed` through named sub-seeds. The schema is documented in
//! `docs/config.md`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use openhospital_core::arena::ArenaConfig;
use openhospital_core::gateway::CallSettings;
use openhospital_core::patient::ChunkingConfig;
use openhospital_core::synth::SynthConfig;

pub const CONFIG_SCHEMA: &str = "openhospital-config/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub paths: Paths,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub synth: SynthSection,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    pub dataset: PathBuf,
    pub knowledge_base: PathBuf,
    pub personas: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_agent_model")]
    pub agent_model: String,
    #[serde(default = "default_judge_model")]
    pub judge_model: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in config or flags.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_agent_model() -> String {
    "agent-model".to_string()
}

fn default_judge_model() -> String {
    "judge-model".to_string()
}

fn default_key_env() -> String {
    "OPENHOSPITAL_API_KEY".to_string()
}

fn default_max_tokens() -> u32 {
    1024
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_n_batches")]
    pub n_batches: usize,
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
    #[serde(default = "default_true")]
    pub reflection: bool,
    #[serde(default = "default_per_department")]
    pub physicians_per_department: usize,
    #[serde(default)]
    pub shared_experience: bool,
}

fn default_train_fraction() -> f64 {
    0.9
}
fn default_n_batches() -> usize {
    22
}
fn default_max_turns() -> u32 {
    30
}
fn default_true() -> bool {
    true
}
fn default_per_department() -> usize {
    2
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
            n_batches: default_n_batches(),
            max_turns: default_max_turns(),
            reflection: true,
            physicians_per_department: default_per_department(),
            shared_experience: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalSection {
    #[serde(default = "default_patient_k")]
    pub patient_k: usize,
    #[serde(default = "default_experience_k")]
    pub experience_k: usize,
    #[serde(default = "default_knowledge_k")]
    pub knowledge_k: usize,
}

fn default_patient_k() -> usize {
    4
}
fn default_experience_k() -> usize {
    5
}
fn default_knowledge_k() -> usize {
    3
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            patient_k: default_patient_k(),
            experience_k: default_experience_k(),
            knowledge_k: default_knowledge_k(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSection {
    #[serde(default = "default_comorbidity_rate")]
    pub comorbidity_rate: f64,
    #[serde(default = "default_max_refine_iters")]
    pub max_refine_iters: u32,
}

fn default_comorbidity_rate() -> f64 {
    0.15
}
fn default_max_refine_iters() -> u32 {
    3
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            comorbidity_rate: default_comorbidity_rate(),
            max_refine_iters: default_max_refine_iters(),
        }
    }
}

/// Flag overrides applied on top of the file; flags win.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub provider: Option<ProviderKind>,
    pub script: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        if config.schema != CONFIG_SCHEMA {
            bail!(
                "config schema {:?} unsupported, expected {CONFIG_SCHEMA:?}",
                config.schema
            );
        }
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(workers) = overrides.workers {
            config.workers = workers;
        }
        if let Some(provider) = overrides.provider.clone() {
            config.provider.kind = provider;
        }
        if let Some(script) = overrides.script.clone() {
            config.provider.script = Some(script);
        }
        if let Some(out_dir) = overrides.out_dir.clone() {
            config.paths.out_dir = out_dir;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("workers: must be at least 1");
        }
        if !(self.run.train_fraction > 0.0 && self.run.train_fraction < 1.0) {
            bail!(
                "run.train_fraction: must lie strictly between 0 and 1, got {}",
                self.run.train_fraction
            );
        }
        if self.run.n_batches == 0 {
            bail!("run.n_batches: must be at least 1");
        }
        if self.run.max_turns == 0 {
            bail!("run.max_turns: must be at least 1");
        }
        if self.run.physicians_per_department == 0 {
            bail!("run.physicians_per_department: must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.synth.comorbidity_rate) {
            bail!(
                "synth.comorbidity_rate: must lie in [0, 1], got {}",
                self.synth.comorbidity_rate
            );
        }
        if self.synth.max_refine_iters == 0 {
            bail!("synth.max_refine_iters: must be at least 1");
        }
        match self.provider.kind {
            ProviderKind::Scripted => {
                if self.provider.script.is_none() {
                    bail!("provider.script: required when provider.kind is \"scripted\"");
                }
                if self.workers > 1 {
                    bail!(
                        "workers: scripted providers are sequence-matched; workers must be 1 \
                         (got {})",
                        self.workers
                    );
                }
            }
            ProviderKind::Remote => {
                if self.provider.base_url.as_deref().unwrap_or("").is_empty() {
                    bail!("provider.base_url: required when provider.kind is \"remote\"");
                }
            }
        }
        Ok(())
    }

    pub fn require_path(&self, key: &str, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(anyhow!("{key}: path {} does not exist", path.display()));
        }
        Ok(())
    }

    pub fn agent_call(&self) -> CallSettings {
        CallSettings {
            model: self.provider.agent_model.clone(),
            temperature: self.provider.temperature,
            max_tokens: self.provider.max_tokens,
        }
    }

    pub fn judge_call(&self) -> CallSettings {
        CallSettings {
            model: self.provider.judge_model.clone(),
            temperature: self.provider.temperature,
            max_tokens: self.provider.max_tokens,
        }
    }

    pub fn arena_config(&self) -> ArenaConfig {
        ArenaConfig {
            max_turns: self.run.max_turns,
            reflection: self.run.reflection,
            shared_experience: self.run.shared_experience,
            patient_k: self.retrieval.patient_k,
            experience_k: self.retrieval.experience_k,
            knowledge_k: self.retrieval.knowledge_k,
            consult_log_window: 6,
            agent_call: self.agent_call(),
            judge_call: self.judge_call(),
            chunking: ChunkingConfig::default(),
            synonyms: None,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            comorbidity_rate: self.synth.comorbidity_rate,
            max_refine_iters: self.synth.max_refine_iters,
            call: self.agent_call(),
            workers: self.workers,
        }
    }
}
