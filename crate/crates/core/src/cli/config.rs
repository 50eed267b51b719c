use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{EntropyStudyConfig, EvalConfig, TABLE_RHOS};
use crate::policy::{FeatureSpec, SftSchedule};
use crate::reward::RewardSchedule;
use crate::rlcore::RlConfig;
use crate::taskgen::CorpusConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub bin_width: f64,
    pub top_k: usize,
    pub min_frequency: usize,
    pub low_threshold: f64,
    /// Heatmaps are written for the first this-many heldout tasks.
    pub heatmaps: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let s = EntropyStudyConfig::default();
        Self {
            bin_width: s.bin_width,
            top_k: s.top_k,
            min_frequency: s.min_frequency,
            low_threshold: s.low_threshold,
            heatmaps: 3,
        }
    }
}

impl AnalysisConfig {
    pub fn study(&self) -> EntropyStudyConfig {
        EntropyStudyConfig {
            bin_width: self.bin_width,
            top_k: self.top_k,
            min_frequency: self.min_frequency,
            low_threshold: self.low_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub rhos: Vec<f64>,
    /// Seeds averaged per row; empty means the run seed alone.
    pub seeds: Vec<u64>,
    /// RL steps per cell; `null` keeps `rl.steps`.
    pub steps: Option<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            rhos: TABLE_RHOS.to_vec(),
            seeds: Vec::new(),
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub policy: FeatureSpec,
    pub sft: SftSchedule,
    pub rl: RlConfig,
    pub reward: RewardSchedule,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            out_dir: PathBuf::from("run"),
            corpus: CorpusConfig::default(),
            policy: FeatureSpec::default(),
            sft: SftSchedule {
                peak_lr: 5.0,
                warmup_steps: 15,
                epochs: 300,
                batch_size: 8,
            },
            rl: RlConfig {
                lr: 20.0,
                batch_size: 24,
                ..RlConfig::default()
            },
            reward: RewardSchedule::default(),
            eval: EvalConfig::default(),
            analysis: AnalysisConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config key `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("config key `{path}`: {message}")]
    Invalid { path: &'static str, message: String },
}

fn invalid(path: &'static str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path,
        message: message.to_string(),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: match e.path().to_string() {
                p if p == "." => "<root>".into(),
                p => p,
            },
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Checks every sub-configuration before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        self.corpus.validate().map_err(|e| invalid("corpus", e))?;
        if self.policy.context == 0 {
            return Err(invalid("policy.context", "must be at least 1"));
        }
        if self.policy.position_buckets == 0 {
            return Err(invalid("policy.position_buckets", "must be at least 1"));
        }
        if self.sft.batch_size == 0 {
            return Err(invalid("sft.batch_size", "must be at least 1"));
        }
        if !(self.sft.peak_lr.is_finite() && self.sft.peak_lr >= 0.0) {
            return Err(invalid("sft.peak_lr", "must be finite and non-negative"));
        }
        self.rl.validate().map_err(|e| invalid("rl", e))?;
        self.reward.validate().map_err(|e| invalid("reward", e))?;
        self.eval.validate().map_err(|e| invalid("eval", e))?;
        let a = &self.analysis;
        if !(a.bin_width > 0.0 && a.bin_width.is_finite()) {
            return Err(invalid("analysis.bin_width", "must be positive"));
        }
        if a.top_k == 0 || a.min_frequency == 0 {
            return Err(invalid("analysis", "top_k and min_frequency must be at least 1"));
        }
        if self.ablation.rhos.is_empty() || self.ablation.rhos.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(invalid("ablation.rhos", "must be a non-empty list of values in [0, 1)"));
        }
        Ok(())
    }
}
