//! SNR-variation scenarios: the checkpoint's variant against the static-only
//! pipeline on the same weights.
//!
//! `cargo run --release --example snr_variation_suite -- [checkpoint.safetensors]`
//!
//! Without a checkpoint a freshly initialized model is used.

use candle_core::{DType, Device};
use drjscc::evaluation::{run_scenario, suites, ModelTag};
use drjscc::training::checkpoint;
use drjscc::{dataset, Drjscc, ModelConfig, Variant};

fn main() -> drjscc::Result<()> {
    let (model, tag) = match std::env::args().nth(1) {
        Some(path) => {
            let loaded = checkpoint::load(path.as_ref(), &Device::Cpu)?;
            (loaded.model, ModelTag::from_meta(&loaded.meta))
        }
        None => {
            let model = Drjscc::new(ModelConfig::desk([1, 12], 8)?, 0, DType::F32, &Device::Cpu)?;
            let tag = ModelTag { checkpoint_id: "untrained".into(), config_hash: String::new(), variant: Variant::Drjscc };
            (model, tag)
        }
    };
    let test = dataset::synthetic(32, 2);
    println!("{:<28} {:>12} {:>12}", "scenario", tag.variant.name(), "static-only");
    for mut spec in suites::fig6(model.blocks(), 32)? {
        let own = run_scenario(&spec, &model, &tag, &test, 0)?;
        spec.variant = Some(Variant::StaticOnly);
        let ablation = run_scenario(&spec, &model, &tag, &test, 0)?;
        println!("{:<28} {:>9.2} dB {:>9.2} dB", spec.name, own.mean_psnr_db, ablation.mean_psnr_db);
    }
    Ok(())
}
