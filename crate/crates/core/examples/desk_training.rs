//! A short training run on synthetic images, with a checkpoint and a resume.
//!
//! `cargo run --release --example desk_training -- [epochs] [out-dir]`

use std::path::PathBuf;

use candle_core::{DType, Device};
use drjscc::training::{checkpoint, TrainConfig, Trainer};
use drjscc::{dataset, Drjscc, ModelConfig, Variant};

fn main() -> drjscc::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let out: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("drjscc-desk"));

    let data = dataset::synthetic(256, 1);
    let config = TrainConfig { epochs, subset: None, checkpoint_every: 1, ..TrainConfig::desk(Variant::Drjscc) };
    let model = Drjscc::new(ModelConfig::desk([1, 12], 8)?, config.seed, DType::F32, &Device::Cpu)?;
    println!("{} parameters, config hash {}", model.parameter_count(), drjscc::training::run_hash(model.config(), &config)?);

    let mut trainer = Trainer::new(model, config.clone())?
        .with_log(out.join("train_log.jsonl"))
        .with_checkpoints(&out);
    trainer.fit_until(&data, epochs.saturating_sub(1).max(1))?;
    for record in trainer.log() {
        println!("epoch {:>2} step {:>4} loss {:.6}", record.epoch, record.step, record.loss);
    }

    let latest = out.join(format!("epoch-{:05}.safetensors", trainer.epoch()));
    let mut resumed = Trainer::resume(checkpoint::load(&latest, &Device::Cpu)?, config)?.with_checkpoints(&out);
    resumed.fit(&data)?;
    for record in resumed.log() {
        println!("epoch {:>2} step {:>4} loss {:.6} (resumed)", record.epoch, record.step, record.loss);
    }
    println!("checkpoints in {}", out.display());
    Ok(())
}
