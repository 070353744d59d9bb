//! The seeded Rayleigh block-fading suite at two coherence lengths.
//!
//! `cargo run --release --example rayleigh_suite -- [checkpoint.safetensors]`
//!
//! Without a checkpoint a freshly initialized R = 1/6, m = 16 model is used.

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
            let model = Drjscc::new(ModelConfig::desk([1, 6], 16)?, 0, DType::F32, &Device::Cpu)?;
            let tag = ModelTag { checkpoint_id: "untrained".into(), config_hash: String::new(), variant: Variant::Drjscc };
            (model, tag)
        }
    };
    let test = dataset::synthetic(16, 2);
    for coherence in suites::FIG7_COHERENCE {
        let mut total = 0.0;
        for i in 0..suites::FIG7_SCENARIOS {
            let spec = suites::fig7_scenario(i, coherence, 16);
            let schedule = spec.template.schedule(model.blocks())?;
            let result = run_scenario(&spec, &model, &tag, &test, 0)?;
            let fades: Vec<String> = schedule.segments().iter().map(|s| format!("{:.1}", s.state.effective_snr_db(1.0))).collect();
            println!("{:<18} {:>7.2} dB  segment SNRs [{}]", spec.name, result.mean_psnr_db, fades.join(" "));
            total += result.mean_psnr_db;
        }
        println!("coherence {coherence}: mean {:.2} dB\n", total / suites::FIG7_SCENARIOS as f64);
    }
    Ok(())
}
