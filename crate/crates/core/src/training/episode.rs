//! Differentiable batched episodes.
//!
//! All items in a batch share one segment structure so the re-encoding calls
//! line up; each item draws its own channel states. The pipeline follows the
//! protocol exactly: segment `j > 0` is re-encoded from the original blocks
//! `p_j..m`, its first `c_j` blocks cross the channel, and the receiver maps
//! them back with the dynamic decoder.

use candle_core::Tensor;
use rand::Rng;

use crate::channel::{self, ChannelState, Csi, EpisodeSchedule, Regime, Segment};
use crate::latent;
use crate::model::{Drjscc, Variant};
use crate::{Error, Result};

/// Channel states for a batch of images sharing one segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    structure: Vec<usize>,
    /// `states[item][segment]`.
    states: Vec<Vec<ChannelState>>,
}

impl EpisodeBatch {
    /// Samples one structure from `regime` and independent states per item.
    /// With probability `static_fraction` an item keeps its first state for
    /// every segment, which exercises the no-refinement path.
    pub fn sample<R: Rng + ?Sized>(
        regime: &Regime,
        blocks: usize,
        items: usize,
        static_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let structure = regime.sample_structure(blocks, rng)?;
        let mut states = Vec::with_capacity(items);
        for _ in 0..items {
            let flat = structure.len() > 1 && rng.random_bool(static_fraction.clamp(0.0, 1.0));
            let first = regime.sample_state(rng)?;
            let mut row = vec![first];
            for _ in 1..structure.len() {
                row.push(if flat { first } else { regime.sample_state(rng)? });
            }
            states.push(row);
        }
        Ok(Self { structure, states })
    }

    /// Batches schedules that share a segmentation.
    pub fn from_schedules(schedules: &[EpisodeSchedule]) -> Result<Self> {
        let first = schedules
            .first()
            .ok_or_else(|| Error::Schedule("empty schedule batch".into()))?;
        let structure = first.structure();
        let mut states = Vec::with_capacity(schedules.len());
        for s in schedules {
            if s.structure() != structure {
                return Err(Error::Schedule("schedules in a batch must share segment lengths".into()));
            }
            states.push(s.segments().iter().map(|seg| seg.state).collect());
        }
        Ok(Self { structure, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn structure(&self) -> &[usize] {
        &self.structure
    }

    pub fn schedule(&self, item: usize) -> Result<EpisodeSchedule> {
        EpisodeSchedule::new(
            self.structure
                .iter()
                .zip(&self.states[item])
                .map(|(&blocks, &state)| Segment { blocks, state })
                .collect(),
        )
    }

    fn segment_states(&self, segment: usize) -> Vec<ChannelState> {
        self.states.iter().map(|row| row[segment]).collect()
    }

    fn segment_csi(&self, segment: usize) -> Vec<Csi> {
        self.states.iter().map(|row| Csi::from_state(&row[segment])).collect()
    }

    fn per_block_csi(&self, item: usize) -> Vec<Csi> {
        self.structure
            .iter()
            .zip(&self.states[item])
            .flat_map(|(&n, s)| std::iter::repeat_n(Csi::from_state(s), n))
            .collect()
    }
}

/// Runs the full encode/transmit/decode pipeline and returns `(B, C, H, W)`
/// reconstructions.
pub fn episode_forward<R: Rng + ?Sized>(
    model: &Drjscc,
    images: &Tensor,
    batch: &EpisodeBatch,
    variant: Variant,
    rng: &mut R,
) -> Result<Tensor> {
    let b = images.dim(0)?;
    if b != batch.len() {
        return Err(Error::Shape(format!("{b} images but {} episodes", batch.len())));
    }
    let m = model.blocks();
    if batch.structure.iter().sum::<usize>() != m {
        return Err(Error::Schedule(format!("episode structure {:?} does not cover m = {m}", batch.structure)));
    }
    let conditioning: Vec<Csi> = (0..b)
        .map(|i| variant.conditioning(&batch.per_block_csi(i)))
        .collect();
    let z = model.encode(images, &conditioning)?;
    let originals = latent::to_block_view(&z, m)?;
    let mut parts = Vec::with_capacity(batch.structure.len());
    let mut next = 0;
    for (j, &len) in batch.structure.iter().enumerate() {
        let states = batch.segment_states(j);
        let refine = j > 0 && variant.refines();
        let sent = if refine {
            let csi = batch.segment_csi(j);
            let remaining = originals.narrow(2, next, m - next)?;
            model
                .dynamic_encoder
                .forward(&remaining, &conditioning, &csi, m)?
                .narrow(2, 0, len)?
        } else {
            originals.narrow(2, next, len)?
        };
        let received = channel::transmit_blocks(&sent, &states, rng)?;
        parts.push(if refine {
            model
                .dynamic_decoder
                .forward(&received, &conditioning, &batch.segment_csi(j), m)?
        } else {
            received
        });
        next += len;
    }
    let z_hat = latent::from_block_view(&Tensor::cat(&parts, 2)?)?;
    model.decode(&z_hat, &conditioning)
}

/// Mean squared error `(1/l)·‖x − x̂‖²` averaged over the batch.
pub fn mse(images: &Tensor, reconstruction: &Tensor) -> Result<Tensor> {
    if images.dims() != reconstruction.dims() {
        return Err(Error::Shape(format!(
            "images {:?} vs reconstruction {:?}",
            images.dims(),
            reconstruction.dims()
        )));
    }
    Ok((images - reconstruction)?.sqr()?.mean_all()?)
}

/// Scalar distortion of one episode batch; differentiable.
pub fn episode_loss<R: Rng + ?Sized>(
    model: &Drjscc,
    images: &Tensor,
    batch: &EpisodeBatch,
    variant: Variant,
    rng: &mut R,
) -> Result<Tensor> {
    mse(images, &episode_forward(model, images, batch, variant, rng)?)
}
