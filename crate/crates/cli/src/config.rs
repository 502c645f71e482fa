use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use rntm_core::experiment::{SerVariant, TrainConfig};
use rntm_core::lid::{LidDims, LidTrainConfig};
use rntm_core::synthcorpus::CorpusRecipe;
use rntm_core::transducer::ModelDims;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Experiment description. Every random stream is derived from `seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub asr: AsrConfig,
    #[serde(default)]
    pub ser: SerSection,
    #[serde(default)]
    pub lid: LidSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Corpus directory; defaults to `<output_dir>/data`.
    pub dir: Option<PathBuf>,
    pub recipe: CorpusRecipe,
    /// Frame counts of the fixed-duration test sets.
    pub durations: Vec<usize>,
    pub duration_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            recipe: CorpusRecipe::default(),
            durations: vec![10, 30, 100, 300],
            duration_count: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsrConfig {
    pub train: TrainConfig,
    /// Language ids used for ASR training; empty means all.
    pub languages: Vec<usize>,
}

impl Default for AsrConfig {
    fn default() -> Self {
        AsrConfig {
            train: TrainConfig {
                epochs: 12,
                ..TrainConfig::default()
            },
            languages: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SerSection {
    pub finetune: TrainConfig,
    pub tag_neutral: bool,
    pub frozen_patterns: Vec<String>,
    pub variants: Vec<SerVariant>,
}

impl Default for SerSection {
    fn default() -> Self {
        SerSection {
            finetune: TrainConfig {
                epochs: 15,
                ..TrainConfig::default()
            },
            tag_neutral: true,
            frozen_patterns: vec!["encoder.*".to_string()],
            variants: SerVariant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LidVariant {
    Frozen,
    Finetune,
}

impl LidVariant {
    pub fn name(self) -> &'static str {
        match self {
            LidVariant::Frozen => "frozen",
            LidVariant::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidSection {
    pub dims: LidDims,
    pub train: LidTrainConfig,
    pub variants: Vec<LidVariant>,
    pub gate_threshold: f64,
}

impl Default for LidSection {
    fn default() -> Self {
        LidSection {
            dims: LidDims::default(),
            train: LidTrainConfig::default(),
            variants: vec![LidVariant::Frozen],
            gate_threshold: 0.5,
        }
    }
}

/// Parsed configuration plus the hash of its source bytes.
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl LoadedConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: ExperimentConfig =
            serde_json::from_slice(&bytes).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        config.validate()?;
        Ok(LoadedConfig {
            config,
            sha256: sha256_hex(&bytes),
        })
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.model.input_dim == self.data.recipe.feature_dim,
            "model.input_dim ({}) must equal data.recipe.feature_dim ({})",
            self.model.input_dim,
            self.data.recipe.feature_dim
        );
        ensure!(
            self.data.durations.windows(2).all(|w| w[0] < w[1]) && self.data.durations.iter().all(|&d| d > 0),
            "data.durations must be positive and strictly increasing"
        );
        ensure!(
            (0.0..=1.0).contains(&self.lid.gate_threshold),
            "lid.gate_threshold must be in [0, 1]"
        );
        self.asr.train.validate().context("asr.train")?;
        self.ser.finetune.validate().context("ser.finetune")?;
        self.lid.train.validate().context("lid.train")?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    /// Independent stream seed for a named stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stage.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}
