//! PSNR, scenario runners and results export.

mod export;
mod plot;
pub mod suites;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, EpisodeSchedule, Segment};
use crate::dataset::Dataset;
use crate::latent::ImageTensor;
use crate::model::{Drjscc, Variant};
use crate::protocol;
use crate::{Error, Result};

pub use export::{export_results, write_table, TABLE_FILE};
pub use plot::{bar_chart, line_chart, Series};

/// `10·log10(max² / mse)`; `+∞` when `mse` is zero.
pub fn psnr_from_mse(mse: f64, max: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max * max / mse).log10()
    }
}

/// PSNR between two equally long pixel arrays on a `[0, max]` scale.
pub fn psnr_with_max(x: &[f64], x_hat: &[f64], max: f64) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::Shape(format!("PSNR over {} vs {} pixels", x.len(), x_hat.len())));
    }
    let mse = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    Ok(psnr_from_mse(mse, max))
}

/// PSNR of a reconstruction with pixels in `[0, 1]`.
pub fn psnr(x: &ImageTensor, x_hat: &ImageTensor) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Shape(format!("PSNR of {:?} vs {:?}", x.shape(), x_hat.shape())));
    }
    let a: Vec<f64> = x.pixels().iter().map(|&p| p as f64).collect();
    let b: Vec<f64> = x_hat.pixels().iter().map(|&p| p as f64).collect();
    psnr_with_max(&a, &b, 1.0)
}

/// How a scenario's channel evolves over the `m` blocks of every image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioTemplate {
    /// Legend notation: segment `i` has SNR `snr_db[i]` over `blocks[i]` blocks.
    Awgn { snr_db: Vec<f64>, blocks: Vec<usize> },
    /// A fresh uniform SNR for every block, drawn once per scenario from `seed`.
    PerBlock { low_db: f64, high_db: f64, seed: u64 },
    /// One block-fading realization drawn from `seed`, shared by all images.
    Rayleigh { coherence: usize, sigma2: f64, seed: u64 },
}

impl ScenarioTemplate {
    /// Parses the legend form `SNR=(19,1),C=(2,6)`.
    pub fn from_legend(text: &str) -> Result<Self> {
        let schedule = EpisodeSchedule::parse_legend(text)?;
        Ok(Self::Awgn {
            snr_db: schedule
                .segments()
                .iter()
                .map(|s| s.state.effective_snr_db(1.0))
                .collect(),
            blocks: schedule.structure(),
        })
    }

    /// The concrete schedule for an `m`-block model.
    pub fn schedule(&self, m: usize) -> Result<EpisodeSchedule> {
        let schedule = match self {
            ScenarioTemplate::Awgn { snr_db, blocks } => {
                if snr_db.len() != blocks.len() {
                    return Err(Error::Schedule(format!(
                        "{} SNR values for {} block counts",
                        snr_db.len(),
                        blocks.len()
                    )));
                }
                let parts: Vec<(f64, usize)> = snr_db.iter().copied().zip(blocks.iter().copied()).collect();
                EpisodeSchedule::awgn(&parts)?
            }
            ScenarioTemplate::PerBlock { low_db, high_db, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let regime = channel::Regime::PerBlock { low_db: *low_db, high_db: *high_db };
                channel::sample_training_episode(&regime, m, &mut rng)?
            }
            ScenarioTemplate::Rayleigh { coherence, sigma2, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let regime = channel::Regime::Rayleigh { coherence: *coherence, sigma2: *sigma2 };
                channel::sample_training_episode(&regime, m, &mut rng)?
            }
        };
        schedule.check_blocks(m)?;
        Ok(schedule)
    }
}

/// One named experiment: a channel template, an image count and optionally
/// a variant that overrides the checkpoint's own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub template: ScenarioTemplate,
    pub images: usize,
    #[serde(default)]
    pub variant: Option<Variant>,
}

/// Per-image and summary PSNR of one scenario under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub variant: String,
    pub checkpoint_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub psnr_db: Vec<f64>,
    pub mean_psnr_db: f64,
    pub std_psnr_db: f64,
}

impl ScenarioResult {
    pub fn n_images(&self) -> usize {
        self.psnr_db.len()
    }
}

/// Sample mean and (n − 1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Identifies the trained model a scenario runs against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTag {
    pub checkpoint_id: String,
    pub config_hash: String,
    pub variant: Variant,
}

impl ModelTag {
    pub fn from_meta(meta: &crate::training::CheckpointMeta) -> Self {
        Self {
            checkpoint_id: meta.id(),
            config_hash: meta.config_hash.clone(),
            variant: meta.variant,
        }
    }
}

/// Seeded choice of `count` distinct dataset indices, in ascending order.
pub fn select_images(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, len, count.min(len)).into_vec();
    idx.sort_unstable();
    idx
}

/// Runs the full protocol for each selected test image and reports PSNR.
///
/// Image `j` draws its channel noise from ChaCha8 stream `j` of `seed`, so
/// results do not depend on evaluation order.
pub fn run_scenario(
    spec: &ScenarioSpec,
    model: &Drjscc,
    tag: &ModelTag,
    data: &Dataset,
    seed: u64,
) -> Result<ScenarioResult> {
    if data.is_empty() {
        return Err(Error::Dataset("no test images".into()));
    }
    let m = model.blocks();
    let schedule = spec.template.schedule(m).map_err(|e| match e {
        Error::Schedule(msg) => Error::Incompatible(format!(
            "scenario {} does not fit the checkpoint's m = {m}: {msg}",
            spec.name
        )),
        other => other,
    })?;
    let variant = spec.variant.unwrap_or(tag.variant);
    let mut psnr_db = Vec::with_capacity(spec.images);
    for (j, idx) in select_images(data.len(), spec.images, seed).into_iter().enumerate() {
        let image = &data.images()[idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64 + 1);
        let outcome = protocol::run_session(model, image, &schedule, variant, &mut rng)?;
        psnr_db.push(psnr(image, &outcome.reconstruction)?);
    }
    let (mean_psnr_db, std_psnr_db) = mean_std(&psnr_db);
    Ok(ScenarioResult {
        scenario: spec.name.clone(),
        variant: variant.name(),
        checkpoint_id: tag.checkpoint_id.clone(),
        config_hash: tag.config_hash.clone(),
        seed,
        psnr_db,
        mean_psnr_db,
        std_psnr_db,
    })
}

/// Quality after each received segment of a single-image session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentQuality {
    pub first_block: usize,
    pub last_block: usize,
    pub snr_db: f64,
    /// PSNR decoding segments up to and including this one, later blocks zeroed.
    pub cumulative_psnr_db: f64,
}

/// Result of [`simulate`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub reconstruction: ImageTensor,
    pub psnr_db: f64,
    pub segments: Vec<SegmentQuality>,
    pub trace: Vec<protocol::TraceEvent>,
}

/// Sends one image through `schedule` and reports the final and per-segment
/// cumulative PSNR.
pub fn simulate(
    model: &Drjscc,
    image: &ImageTensor,
    schedule: &EpisodeSchedule,
    variant: Variant,
    seed: u64,
) -> Result<Simulation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = protocol::run_session(model, image, schedule, variant, &mut rng)?;
    let conditioning = variant.conditioning(&schedule.per_block_csi());
    let segments = outcome
        .segments
        .iter()
        .enumerate()
        .map(|(j, seg)| {
            let partial = protocol::decode_prefix(&outcome.segments, j + 1, conditioning, variant, model)?;
            Ok(SegmentQuality {
                first_block: seg.first,
                last_block: seg.last,
                snr_db: seg.csi.snr_db,
                cumulative_psnr_db: psnr(image, &partial)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation {
        psnr_db: psnr(image, &outcome.reconstruction)?,
        reconstruction: outcome.reconstruction,
        segments,
        trace: outcome.trace,
    })
}

/// A constant AWGN schedule at `snr_db` over `m` blocks.
pub fn static_schedule(snr_db: f64, m: usize) -> Result<EpisodeSchedule> {
    EpisodeSchedule::new(vec![Segment { blocks: m, state: ChannelState::awgn_db(snr_db)? }])
}
