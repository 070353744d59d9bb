//! Built-in scenario suites.
//!
//! - `fig5`: constant AWGN at 1, 4, 7, 13 and 19 dB
//! - `fig6`: SNR changing once, twice, and in every block
//! - `fig7`: twelve seeded Rayleigh block-fading scenarios at coherence 4 and 1
//!
//! Block counts are written for `m = 8` and scaled for other multiples of 8.

use super::{ScenarioSpec, ScenarioTemplate};
use crate::{Error, Result};

pub const SUITES: [&str; 3] = ["fig5", "fig6", "fig7"];
pub const FIG5_SNR_DB: [f64; 5] = [1.0, 4.0, 7.0, 13.0, 19.0];
/// Base seed of the Rayleigh realizations; scenario `i` uses `FIG7_SEED + i`.
pub const FIG7_SEED: u64 = 7_000;
pub const FIG7_SCENARIOS: usize = 12;
pub const FIG7_COHERENCE: [usize; 2] = [4, 1];
/// Noise variance of the Rayleigh suite (10 dB mean SNR at unit power).
pub const FIG7_SIGMA2: f64 = 0.1;
const FIG6_PER_BLOCK_SEEDS: [u64; 3] = [6_001, 6_002, 6_003];

fn scale(blocks: &[usize], m: usize) -> Result<Vec<usize>> {
    if m % 8 != 0 {
        return Err(Error::Config(format!("suite block counts need m to be a multiple of 8, got {m}")));
    }
    Ok(blocks.iter().map(|c| c * m / 8).collect())
}

/// Legend-named AWGN scenario.
pub fn awgn(snr_db: &[f64], blocks: &[usize], images: usize) -> ScenarioSpec {
    let fmt = |v: &[String]| v.join(",");
    let name = format!(
        "SNR=({}),C=({})",
        fmt(&snr_db.iter().map(|s| format!("{s}")).collect::<Vec<_>>()),
        fmt(&blocks.iter().map(|c| c.to_string()).collect::<Vec<_>>())
    );
    ScenarioSpec {
        name,
        template: ScenarioTemplate::Awgn { snr_db: snr_db.to_vec(), blocks: blocks.to_vec() },
        images,
        variant: None,
    }
}

pub fn fig5(m: usize, images: usize) -> Vec<ScenarioSpec> {
    FIG5_SNR_DB.iter().map(|&s| awgn(&[s], &[m], images)).collect()
}

pub fn fig6(m: usize, images: usize) -> Result<Vec<ScenarioSpec>> {
    let mut out = Vec::new();
    for snr in [[19.0, 1.0], [1.0, 19.0]] {
        for blocks in [[2, 6], [6, 2]] {
            out.push(awgn(&snr, &scale(&blocks, m)?, images));
        }
    }
    for snr in [[19.0, 1.0, 19.0], [1.0, 19.0, 1.0]] {
        out.push(awgn(&snr, &scale(&[2, 3, 3], m)?, images));
    }
    for seed in FIG6_PER_BLOCK_SEEDS {
        out.push(ScenarioSpec {
            name: format!("per-block-{seed}"),
            template: ScenarioTemplate::PerBlock { low_db: 0.0, high_db: 20.0, seed },
            images,
            variant: None,
        });
    }
    Ok(out)
}

/// Rayleigh scenario `index` (0-based) at the given coherence length.
pub fn fig7_scenario(index: usize, coherence: usize, images: usize) -> ScenarioSpec {
    ScenarioSpec {
        name: format!("rayleigh-{:02}/coh{coherence}", index + 1),
        template: ScenarioTemplate::Rayleigh {
            coherence,
            sigma2: FIG7_SIGMA2,
            seed: FIG7_SEED + index as u64,
        },
        images,
        variant: None,
    }
}

pub fn fig7(images: usize) -> Vec<ScenarioSpec> {
    FIG7_COHERENCE
        .iter()
        .flat_map(|&c| (0..FIG7_SCENARIOS).map(move |i| fig7_scenario(i, c, images)))
        .collect()
}

/// Resolves a suite name for an `m`-block model.
pub fn builtin(name: &str, m: usize, images: usize) -> Result<Vec<ScenarioSpec>> {
    match name {
        "fig5" => Ok(fig5(m, images)),
        "fig6" => fig6(m, images),
        "fig7" => Ok(fig7(images)),
        other => Err(Error::Config(format!("unknown suite {other:?}; known suites: {}", SUITES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_fit_their_block_count() {
        for m in [8, 16] {
            for name in SUITES {
                for spec in builtin(name, m, 4).unwrap() {
                    assert_eq!(spec.template.schedule(m).unwrap().total_blocks(), m, "{}", spec.name);
                }
            }
        }
        assert!(fig6(12, 1).is_err());
        assert!(builtin("fig9", 8, 1).is_err());
    }

    #[test]
    fn fig6_names_use_legend_notation() {
        let names: Vec<String> = fig6(8, 1).unwrap().into_iter().map(|s| s.name).collect();
        assert!(names.contains(&"SNR=(19,1),C=(2,6)".to_string()));
        assert!(names.contains(&"SNR=(19,1),C=(6,2)".to_string()));
        let t = ScenarioTemplate::from_legend(&names[0]).unwrap();
        assert_eq!(t.schedule(8).unwrap().structure(), vec![2, 6]);
    }

    #[test]
    fn fig7_has_twelve_scenarios_per_coherence() {
        let specs = fig7(128);
        assert_eq!(specs.len(), 24);
        let c4 = fig7_scenario(3, 4, 1).template.schedule(16).unwrap();
        let c1 = fig7_scenario(3, 1, 1).template.schedule(16).unwrap();
        assert_eq!(c4.segments().len(), 4);
        assert_eq!(c1.segments().len(), 16);
    }
}
