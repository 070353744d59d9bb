//! Run orchestration behind the `drjscc` binary: `train`, `evaluate`,
//! `simulate` and `export`.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device};

use crate::channel::EpisodeSchedule;
use crate::config::RunConfig;
use crate::dataset::{self, Split};
use crate::evaluation::{self, ModelTag, ScenarioResult, Simulation};
use crate::latent::ImageTensor;
use crate::model::{Drjscc, Variant};
use crate::training::{checkpoint, LogRecord, Trainer};
use crate::{Error, Result};

/// Outputs of a finished `train` command.
#[derive(Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub config_hash: String,
    pub log: Vec<LogRecord>,
}

/// Trains (or resumes) per `config`, writing checkpoints, the JSON-lines log
/// and the resolved config under the configured paths.
pub fn cmd_train(config: &RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    let data = config.data.load(Split::Train)?;
    log::info!("{} training images", data.len());
    let device = Device::Cpu;
    let trainer = match resume {
        Some(path) => {
            let loaded = checkpoint::load(path, &device)?;
            if loaded.meta.model != config.model {
                return Err(Error::Incompatible(format!(
                    "{} holds a different model configuration",
                    path.display()
                )));
            }
            log::info!("resuming from {} at epoch {}", path.display(), loaded.meta.epoch);
            Trainer::resume(loaded, config.train.clone())?
        }
        None => {
            let model = Drjscc::new(config.model.clone(), config.train.seed, DType::F32, &device)?;
            Trainer::new(model, config.train.clone())?
        }
    };
    config.write_resolved(&config.paths.checkpoints)?;
    let mut trainer = trainer
        .with_log(&config.paths.log)
        .with_checkpoints(&config.paths.checkpoints);
    log::info!(
        "config {} with {} parameters",
        trainer.config_hash(),
        trainer.model().parameter_count()
    );
    trainer.fit(&data)?;
    Ok(TrainSummary {
        checkpoint: config.paths.final_checkpoint(),
        config_hash: trainer.config_hash().to_string(),
        log: trainer.log().to_vec(),
    })
}

/// Checks that a checkpoint's bandwidth and block count match the config.
pub fn check_compatible(config: &RunConfig, meta: &checkpoint::CheckpointMeta) -> Result<()> {
    let (want, have) = (&config.model, &meta.model);
    if want.ratio != have.ratio {
        return Err(Error::Incompatible(format!(
            "bandwidth ratio: config R = {}/{}, checkpoint R = {}/{}",
            want.ratio[0], want.ratio[1], have.ratio[0], have.ratio[1]
        )));
    }
    if want.blocks != have.blocks {
        return Err(Error::Incompatible(format!(
            "block count: config m = {}, checkpoint m = {}",
            want.blocks, have.blocks
        )));
    }
    if want.image != have.image {
        return Err(Error::Incompatible(format!(
            "image shape: config {:?}, checkpoint {:?}",
            want.image, have.image
        )));
    }
    Ok(())
}

/// Runs every configured scenario on every checkpoint and exports the
/// table and plots to `out`.
pub fn cmd_evaluate(config: &RunConfig, out: &Path) -> Result<Vec<ScenarioResult>> {
    let data = config.data.load(Split::Test)?;
    let checkpoints = if config.evaluate.checkpoints.is_empty() {
        vec![config.paths.final_checkpoint()]
    } else {
        config.evaluate.checkpoints.clone()
    };
    let scenarios = config.evaluate.scenarios_for(config.model.blocks)?;
    let mut results = Vec::new();
    for path in &checkpoints {
        let loaded = checkpoint::load(path, &Device::Cpu)?;
        check_compatible(config, &loaded.meta)?;
        let tag = ModelTag::from_meta(&loaded.meta);
        let mut variants = vec![loaded.meta.variant];
        variants.extend(config.evaluate.variants.iter().filter(|v| **v != loaded.meta.variant));
        for spec in &scenarios {
            for &variant in &variants {
                let mut spec = spec.clone();
                spec.variant = Some(spec.variant.unwrap_or(variant));
                let r = evaluation::run_scenario(&spec, &loaded.model, &tag, &data, config.evaluate.seed)?;
                log::info!("{} [{}] {}: {:.3} dB", r.scenario, r.variant, r.checkpoint_id, r.mean_psnr_db);
                results.push(r);
            }
        }
    }
    config.write_resolved(out)?;
    evaluation::export_results(&results, out)?;
    Ok(results)
}

/// Where `simulate` takes its image from.
#[derive(Debug, Clone)]
pub enum ImageSource {
    File(PathBuf),
    /// Index into the configured test split.
    TestIndex(usize),
}

/// Transmits one image under a legend-notation schedule. Writes the
/// reconstruction PNG and the JSON trace into `out` when given.
pub fn cmd_simulate(
    config: &RunConfig,
    checkpoint_path: &Path,
    source: &ImageSource,
    schedule: &str,
    variant: Option<Variant>,
    out: Option<&Path>,
) -> Result<Simulation> {
    let loaded = checkpoint::load(checkpoint_path, &Device::Cpu)?;
    let schedule = EpisodeSchedule::parse_legend(schedule)?;
    schedule.check_blocks(loaded.model.blocks())?;
    let image: ImageTensor = match source {
        ImageSource::File(path) => dataset::load_png(path)?,
        ImageSource::TestIndex(i) => {
            let data = config.data.load(Split::Test)?;
            data.get(*i)
                .cloned()
                .ok_or_else(|| Error::Dataset(format!("test split has {} images, no index {i}", data.len())))?
        }
    };
    let variant = variant.unwrap_or(loaded.meta.variant);
    let sim = evaluation::simulate(&loaded.model, &image, &schedule, variant, config.evaluate.seed)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        dataset::save_png(&sim.reconstruction, &dir.join("reconstruction.png"))?;
        let trace = dir.join("trace.json");
        std::fs::write(&trace, serde_json::to_string_pretty(&sim.trace)?).map_err(|e| Error::io(&trace, e))?;
        let report = dir.join("segments.json");
        std::fs::write(&report, serde_json::to_string_pretty(&sim.segments)?).map_err(|e| Error::io(&report, e))?;
    }
    Ok(sim)
}

/// Re-renders the table and plots from a saved `per_image.json`.
pub fn cmd_export_results(per_image: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(per_image).map_err(|e| Error::io(per_image, e))?;
    let results: Vec<ScenarioResult> = serde_json::from_str(&text)?;
    evaluation::export_results(&results, out)
}
