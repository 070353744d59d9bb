//! Run configuration: one TOML file with `model`, `train`, `data`,
//! `evaluate` and `paths` sections.
//!
//! The JSON schema of the file format is checked in as `config.schema.json`
//! and regenerated by [`schema_json`].

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, Dataset, Split};
use crate::evaluation::{suites, ScenarioSpec};
use crate::model::{ModelConfig, Variant};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Encoder widths of the full-size preset.
pub const FULL_WIDTHS: (usize, usize) = (256, 256);
pub const PRESETS: [&str; 4] = ["full", "full-r6", "desk", "desk-r6"];

/// Where images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// CIFAR-10 binary batches under `root`, or under `$DRJSCC_DATA_ROOT`.
    Cifar10 {
        #[serde(default)]
        root: Option<PathBuf>,
    },
    /// Procedurally generated 32×32 images.
    Synthetic { train: usize, test: usize, seed: u64 },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Cifar10 { root: None }
    }
}

impl DataConfig {
    pub fn load(&self, split: Split) -> Result<Dataset> {
        match self {
            DataConfig::Cifar10 { root } => {
                let root = root.clone().or_else(dataset::data_root_from_env).ok_or_else(|| {
                    Error::Dataset(format!(
                        "no dataset root: set `data.root` in the config or the {} environment variable",
                        dataset::DATA_ROOT_ENV
                    ))
                })?;
                dataset::load_cifar10(&root, split)
            }
            DataConfig::Synthetic { train, test, seed } => Ok(match split {
                Split::Train => dataset::synthetic(*train, *seed),
                Split::Test => dataset::synthetic(*test, seed.wrapping_add(1)),
            }),
        }
    }
}

/// Scenario selection for `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Built-in suites: `fig5`, `fig6`, `fig7`.
    pub suites: Vec<String>,
    /// Additional explicit scenarios.
    pub scenarios: Vec<ScenarioSpec>,
    /// Test images per built-in scenario.
    pub images: usize,
    /// Checkpoints to evaluate; empty means the final training checkpoint.
    pub checkpoints: Vec<PathBuf>,
    /// Extra variants run on every checkpoint besides its own.
    pub variants: Vec<Variant>,
    pub seed: u64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            suites: vec!["fig5".into(), "fig6".into()],
            scenarios: Vec::new(),
            images: 128,
            checkpoints: Vec::new(),
            variants: Vec::new(),
            seed: 0,
        }
    }
}

impl EvaluateConfig {
    /// Expands suites and explicit scenarios for an `m`-block model.
    pub fn scenarios_for(&self, m: usize) -> Result<Vec<ScenarioSpec>> {
        let mut out = Vec::new();
        for suite in &self.suites {
            out.extend(suites::builtin(suite, m, self.images)?);
        }
        out.extend(self.scenarios.iter().cloned());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub checkpoints: PathBuf,
    pub results: PathBuf,
    pub log: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            checkpoints: "runs/checkpoints".into(),
            results: "runs/results".into(),
            log: "runs/train_log.jsonl".into(),
        }
    }
}

impl PathsConfig {
    pub fn final_checkpoint(&self) -> PathBuf {
        self.checkpoints.join("final.safetensors")
    }
}

/// Everything a command needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides `train.seed` and `evaluate.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl RunConfig {
    /// Full-size settings: 1,920 epochs, batch 128, learning rate 1e-4 on CIFAR-10.
    pub fn full(ratio: [usize; 2], blocks: usize) -> Result<Self> {
        Ok(Self {
            seed: None,
            model: ModelConfig::cifar(ratio, blocks, FULL_WIDTHS)?,
            train: TrainConfig::default(),
            data: DataConfig::default(),
            evaluate: EvaluateConfig::default(),
            paths: PathsConfig::default(),
        })
    }

    /// Ten epochs on 5,000 images with narrow layers.
    pub fn desk(ratio: [usize; 2], blocks: usize) -> Result<Self> {
        Ok(Self {
            seed: None,
            model: ModelConfig::desk(ratio, blocks)?,
            train: TrainConfig::desk(Variant::Drjscc),
            data: DataConfig::default(),
            evaluate: EvaluateConfig::default(),
            paths: PathsConfig::default(),
        })
    }

    /// `full`/`desk` use R = 1/12, m = 8; the `-r6` forms use R = 1/6, m = 16.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Self::full([1, 12], 8),
            "full-r6" => Self::full([1, 6], 16).map(|c| c.with_suites(&["fig7"])),
            "desk" => Self::desk([1, 12], 8),
            "desk-r6" => Self::desk([1, 6], 16).map(|c| c.with_suites(&["fig7"])),
            other => Err(Error::Config(format!("unknown preset {other:?}; known: {}", PRESETS.join(", ")))),
        }
    }

    fn with_suites(mut self, suites: &[&str]) -> Self {
        self.evaluate.suites = suites.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the top-level seed and validates every section.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.evaluate.seed = seed;
        }
        self.model.validate()?;
        self.train.validate()?;
        for suite in &self.evaluate.suites {
            suites::builtin(suite, self.model.blocks, 1)?;
        }
        Ok(self)
    }

    /// Hash of the resolved configuration.
    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    /// Writes `resolved_config.toml` (with its hash in a leading comment)
    /// into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("resolved_config.toml");
        let text = format!("# config hash {}\n{}", self.hash()?, self.to_toml()?);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json))[..16].to_string())
}

/// JSON schema of [`RunConfig`].
pub fn schema_json() -> String {
    let schema = schemars::schema_for!(RunConfig);
    serde_json::to_string_pretty(&schema).expect("schemas serialize") + "\n"
}
