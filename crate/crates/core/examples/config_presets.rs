//! Built-in presets as TOML, with their run hashes.
//!
//! `cargo run --example config_presets -- desk`

use drjscc::config::{RunConfig, PRESETS};

fn main() -> drjscc::Result<()> {
    match std::env::args().nth(1) {
        Some(name) => {
            let config = RunConfig::preset(&name)?.resolve()?;
            println!("# hash {}\n{}", config.hash()?, config.to_toml()?);
        }
        None => {
            for name in PRESETS {
                let config = RunConfig::preset(name)?.resolve()?;
                println!(
                    "{name:<9} R = {}/{} m = {:<2} widths {:?} epochs {:<5} hash {}",
                    config.model.ratio[0],
                    config.model.ratio[1],
                    config.model.blocks,
                    config.model.conv.iter().map(|c| c.channels).collect::<Vec<_>>(),
                    config.train.epochs,
                    config.hash()?
                );
            }
        }
    }
    Ok(())
}
