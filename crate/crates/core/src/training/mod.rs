//! End-to-end optimization of all four parameter sets through sampled
//! channel episodes.
//!
//! Each epoch draws its randomness from a ChaCha8 stream keyed by
//! `(seed, epoch)`, so a run resumed from a checkpoint continues the exact
//! loss curve of an uninterrupted one.

pub mod checkpoint;
pub mod episode;
pub mod optim;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::backprop::GradStore;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::channel::Regime;
use crate::dataset::Dataset;
use crate::latent;
use crate::model::{self, Drjscc, ModelConfig, Variant};
use crate::nn;
use crate::{Error, Result};

pub use checkpoint::CheckpointMeta;
pub use episode::{episode_forward, episode_loss, mse, EpisodeBatch};
pub use optim::{AdamW, AdamWParams};

/// Optimization hyperparameters and the episode distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Episode regimes; each batch draws one uniformly.
    pub regimes: Vec<Regime>,
    /// Probability that a multi-segment item keeps one state throughout.
    pub static_fraction: f64,
    pub variant: Variant,
    /// Use only the first `subset` training images.
    pub subset: Option<usize>,
    /// Save a checkpoint every this many epochs (0 disables periodic saves).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 1920,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            regimes: default_regimes(Variant::Drjscc),
            static_fraction: 0.25,
            variant: Variant::Drjscc,
            subset: None,
            checkpoint_every: 50,
            seed: 0,
        }
    }
}

/// Uniform SNR in [0, 20] dB with per-block and segmented variation. The
/// static-only ablation trains on the same episodes as the full pipeline.
pub fn default_regimes(variant: Variant) -> Vec<Regime> {
    let (low_db, high_db) = (0.0, 20.0);
    match variant {
        Variant::Drjscc | Variant::StaticOnly => vec![
            Regime::PerBlock { low_db, high_db },
            Regime::Segmented { low_db, high_db, max_changes: 15 },
        ],
        Variant::StaticFixedSnr { snr_db } => vec![Regime::FixedSnr { snr_db }],
    }
}

impl TrainConfig {
    /// Ten epochs over 5,000 images with a smaller batch and larger step.
    pub fn desk(variant: Variant) -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            regimes: default_regimes(variant),
            variant,
            subset: Some(5000),
            checkpoint_every: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.regimes.is_empty() {
            return bad("at least one training regime is required".into());
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return bad(format!("static_fraction must lie in [0, 1], got {}", self.static_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWParams {
        AdamWParams {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Completed epochs; 0 is the initialization probe.
    pub epoch: usize,
    pub step: usize,
    /// Mean training loss over the epoch (the probe loss for epoch 0).
    pub loss: f64,
    pub wall_seconds: f64,
}

/// Hash identifying a model + training configuration pair.
pub fn run_hash(model: &ModelConfig, train: &TrainConfig) -> Result<String> {
    crate::config::config_hash(&(model, train))
}

/// Training state: model, optimizer, counters and the loss curve so far.
#[derive(Debug)]
pub struct Trainer {
    model: Drjscc,
    optimizer: AdamW,
    config: TrainConfig,
    hash: String,
    epoch: usize,
    log: Vec<LogRecord>,
    log_path: Option<PathBuf>,
    checkpoint_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(model: Drjscc, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let hash = run_hash(model.config(), &config)?;
        let optimizer = AdamW::new(nn::sorted_vars(model.varmap()), config.optimizer())?;
        Ok(Self {
            model,
            optimizer,
            config,
            hash,
            epoch: 0,
            log: Vec::new(),
            log_path: None,
            checkpoint_dir: None,
        })
    }

    /// Continues from a saved checkpoint, restoring optimizer moments.
    pub fn resume(loaded: checkpoint::Loaded, config: TrainConfig) -> Result<Self> {
        let checkpoint::Loaded { meta, model, moments } = loaded;
        let mut trainer = Self::new(model, config)?;
        if meta.config_hash != trainer.hash {
            return Err(Error::Incompatible(format!(
                "checkpoint was trained under config {} but this run resolves to {}",
                meta.config_hash, trainer.hash
            )));
        }
        trainer.optimizer.restore(meta.step, |name| moments.get(name).cloned())?;
        trainer.epoch = meta.epoch;
        Ok(trainer)
    }

    /// Appends log records to a JSON-lines file.
    pub fn with_log(mut self, path: impl Into<PathBuf>) -> Self {
        self.log_path = Some(path.into());
        self
    }

    /// Directory for periodic, final and diagnostic checkpoints.
    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn model(&self) -> &Drjscc {
        &self.model
    }

    pub fn into_model(self) -> Drjscc {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step(&self) -> usize {
        self.optimizer.step_count()
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn optimizer(&self) -> &AdamW {
        &self.optimizer
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            format: checkpoint::FORMAT.into(),
            model: self.model.config().clone(),
            variant: self.config.variant,
            train: Some(self.config.clone()),
            config_hash: self.hash.clone(),
            epoch: self.epoch,
            step: self.step(),
            seed: self.config.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.model, Some(&self.optimizer), &self.meta())
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        rng
    }

    fn record(&mut self, rec: LogRecord) -> Result<()> {
        if let Some(path) = &self.log_path {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writeln!(f, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(path, e))?;
        }
        log::info!("epoch {} step {} loss {:.6}", rec.epoch, rec.step, rec.loss);
        self.log.push(rec);
        Ok(())
    }

    fn training_images<'d>(&self, data: &'d Dataset) -> &'d [crate::ImageTensor] {
        let n = self.config.subset.unwrap_or(data.len()).min(data.len());
        &data.images()[..n]
    }

    /// Loss of the current parameters on `data` under a fixed episode draw.
    pub fn probe_loss(&self, data: &Dataset) -> Result<f64> {
        evaluate_loss(
            &self.model,
            self.training_images(data),
            &self.config,
            self.config.seed ^ PROBE_SALT,
        )
    }

    /// Runs one epoch and returns its log record.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<LogRecord> {
        let start = Instant::now();
        let images = self.training_images(data);
        if images.is_empty() {
            return Err(Error::Dataset("no training images".into()));
        }
        let epoch = self.epoch + 1;
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&crate::ImageTensor> = chunk.iter().map(|&i| &images[i]).collect();
            let x = latent::stack_images(&batch, self.model.dtype(), self.model.device())?;
            let regime = &self.config.regimes[rand::Rng::random_range(&mut rng, 0..self.config.regimes.len())];
            let episodes =
                EpisodeBatch::sample(regime, self.model.blocks(), batch.len(), self.config.static_fraction, &mut rng)?;
            let loss = episode_loss(&self.model, &x, &episodes, self.config.variant, &mut rng)?;
            let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                let diagnostic = self.diagnostic_checkpoint(epoch)?;
                return Err(Error::NonFiniteLoss {
                    loss: value,
                    epoch,
                    step: self.step(),
                    diagnostic,
                });
            }
            let grads = loss.backward()?;
            self.optimizer.step(&grads)?;
            total += value;
            batches += 1;
        }
        self.epoch = epoch;
        let rec = LogRecord {
            epoch,
            step: self.step(),
            loss: total / batches as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        self.record(rec.clone())?;
        if let Some(dir) = &self.checkpoint_dir {
            if self.config.checkpoint_every > 0 && epoch % self.config.checkpoint_every == 0 {
                self.save(&dir.join(format!("epoch-{epoch:05}.safetensors")))?;
            }
        }
        Ok(rec)
    }

    fn diagnostic_checkpoint(&self, epoch: usize) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.checkpoint_dir else {
            return Ok(None);
        };
        let path = dir.join(format!("diagnostic-epoch-{epoch:05}.safetensors"));
        self.save(&path)?;
        Ok(Some(path))
    }

    /// Trains until `epochs` epochs are complete, logging the
    /// initialization probe first on a fresh run.
    pub fn fit_until(&mut self, data: &Dataset, epochs: usize) -> Result<()> {
        if self.epoch == 0 && self.log.is_empty() {
            let start = Instant::now();
            let loss = self.probe_loss(data)?;
            self.record(LogRecord { epoch: 0, step: 0, loss, wall_seconds: start.elapsed().as_secs_f64() })?;
        }
        while self.epoch < epochs {
            self.train_epoch(data)?;
        }
        Ok(())
    }

    /// Trains until `config.epochs` epochs are complete and writes
    /// `final.safetensors` when a checkpoint directory is set.
    pub fn fit(&mut self, data: &Dataset) -> Result<&[LogRecord]> {
        self.fit_until(data, self.config.epochs)?;
        if let Some(dir) = &self.checkpoint_dir {
            self.save(&dir.join("final.safetensors"))?;
        }
        Ok(&self.log)
    }
}

const PROBE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Mean episode loss over `images` with episodes and noise drawn from `seed`;
/// no parameters change.
pub fn evaluate_loss(model: &Drjscc, images: &[crate::ImageTensor], config: &TrainConfig, seed: u64) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Dataset("no images to evaluate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in images.chunks(config.batch_size) {
        let batch: Vec<&crate::ImageTensor> = chunk.iter().collect();
        let x = latent::stack_images(&batch, model.dtype(), model.device())?;
        let regime = &config.regimes[rand::Rng::random_range(&mut rng, 0..config.regimes.len())];
        let episodes = EpisodeBatch::sample(regime, model.blocks(), batch.len(), config.static_fraction, &mut rng)?;
        let loss = episode_forward(model, &x, &episodes, config.variant, &mut rng)
            .and_then(|r| mse(&x, &r))?
            .to_dtype(candle_core::DType::F64)?
            .to_scalar::<f64>()?;
        total += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Gradient L2 norm per parameter set, keyed by the set's name prefix.
pub fn group_gradient_norms(model: &Drjscc, grads: &GradStore) -> Result<Vec<(&'static str, f64)>> {
    [
        model::STATIC_ENCODER,
        model::DYNAMIC_ENCODER,
        model::STATIC_DECODER,
        model::DYNAMIC_DECODER,
    ]
    .into_iter()
    .map(|prefix| {
        let mut sq = 0.0;
        for (_, var) in nn::vars_with_prefix(model.varmap(), prefix) {
            if let Some(g) = grads.get(var.as_tensor()) {
                sq += g.to_dtype(candle_core::DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
            }
        }
        Ok((prefix, sq.sqrt()))
    })
    .collect()
}
