//! Progressive block transmission with re-encoding on channel changes.
//!
//! The transmitter caches the initial encoding `z^{h₀}` for the whole session.
//! On every CSI change the blocks `p..m` that have not been sent yet are
//! re-encoded *from that cache*, never from an earlier re-encoding. The
//! receiver records one [`SegmentRecord`] per channel state and, at the end,
//! maps every segment back to the `h₀` space before static decoding.

use candle_core::Tensor;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{self, ChannelState, Csi, EpisodeSchedule};
use crate::latent::{self, average_power, ImageTensor, SymbolBlocks};
use crate::model::{Drjscc, Variant};
use crate::{Error, Result};

/// One step of a session, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        csi: Csi,
        blocks: usize,
        power: f64,
        digest: String,
    },
    ReEncode {
        /// First untransmitted block `p` (1-indexed).
        first_block: usize,
        remaining: usize,
        csi: Csi,
        bypassed: bool,
        /// Digest of the tensor fed to the dynamic encoder.
        input_digest: String,
        /// Digest of the cached originals `p..m`.
        originals_digest: String,
        output_digest: String,
        power: f64,
    },
    Retune {
        first_block: usize,
        csi: Csi,
    },
    Block {
        index: usize,
        segment: usize,
        csi: Csi,
        power: f64,
    },
}

fn digest(t: &Tensor) -> Result<String> {
    let values = t.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    Ok(hex::encode(&h.finalize()[..12]))
}

fn tensor_power(t: &Tensor) -> Result<f64> {
    let values = t.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    Ok(values.iter().map(|v| v * v).sum::<f64>() / (values.len() / 2).max(1) as f64)
}

/// Sender side of one image's session.
#[derive(Debug)]
pub struct Transmitter<'m> {
    model: &'m Drjscc,
    /// `(1, d, m)` view of `z^{h₀}`; never modified after start.
    originals: Tensor,
    initial_csi: Csi,
    state: ChannelState,
    csi: Csi,
    /// `(1, d, m - p + 1)` encoding valid for `csi`.
    current: Tensor,
    next: usize,
    segment: usize,
    trace: Vec<TraceEvent>,
}

impl<'m> Transmitter<'m> {
    /// Encodes `image` for the initial channel `state`.
    pub fn start(model: &'m Drjscc, image: &ImageTensor, state: ChannelState) -> Result<Self> {
        Self::start_conditioned(model, image, state, Csi::from_state(&state))
    }

    /// Encodes `image` conditioned on `csi` while the physical channel is `state`.
    pub fn start_conditioned(
        model: &'m Drjscc,
        image: &ImageTensor,
        state: ChannelState,
        csi: Csi,
    ) -> Result<Self> {
        model.check_image(image)?;
        let z = model.encode(&image.to_tensor(model.dtype(), model.device())?, &[csi])?;
        let originals = latent::to_block_view(&z, model.blocks())?;
        let trace = vec![TraceEvent::Start {
            csi,
            blocks: model.blocks(),
            power: tensor_power(&originals)?,
            digest: digest(&originals)?,
        }];
        Ok(Self {
            model,
            current: originals.clone(),
            originals,
            initial_csi: csi,
            state,
            csi,
            next: 0,
            segment: 0,
            trace,
        })
    }

    pub fn total_blocks(&self) -> usize {
        self.model.blocks()
    }

    /// Index `p` (1-indexed) of the next block to send.
    pub fn next_block(&self) -> usize {
        self.next + 1
    }

    pub fn remaining(&self) -> usize {
        self.total_blocks() - self.next
    }

    pub fn is_complete(&self) -> bool {
        self.remaining() == 0
    }

    pub fn initial_csi(&self) -> Csi {
        self.initial_csi
    }

    pub fn current_csi(&self) -> Csi {
        self.csi
    }

    /// The cached `z^{h₀}` blocks.
    pub fn original_blocks(&self) -> Result<SymbolBlocks> {
        SymbolBlocks::new(latent::block_view_to_complex(&self.originals, 0)?, self.total_blocks())
    }

    /// The `m - p + 1` blocks that will be sent next.
    pub fn current_encoding(&self) -> Result<SymbolBlocks> {
        SymbolBlocks::new(latent::block_view_to_complex(&self.current, 0)?, self.remaining().max(1))
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// The channel changed to `state`: re-encode blocks `p..m` from the cache.
    /// A no-op once every block has been sent.
    pub fn on_csi_change(&mut self, state: ChannelState) -> Result<()> {
        if self.is_complete() {
            return Ok(());
        }
        let csi = Csi::from_state(&state);
        let remaining = self.remaining();
        let source = self.originals.narrow(2, self.next, remaining)?;
        let refined = self.model.dynamic_encoder.forward(
            &source,
            &[self.initial_csi],
            &[csi],
            self.total_blocks(),
        )?;
        self.trace.push(TraceEvent::ReEncode {
            first_block: self.next_block(),
            remaining,
            csi,
            bypassed: csi.no_worse_than(&self.initial_csi),
            input_digest: digest(&source)?,
            originals_digest: digest(&self.originals.narrow(2, self.next, remaining)?)?,
            output_digest: digest(&refined)?,
            power: tensor_power(&refined)?,
        });
        self.current = refined;
        self.state = state;
        self.csi = csi;
        self.segment += 1;
        Ok(())
    }

    /// Switches the physical channel without re-encoding (static variants).
    pub fn retune(&mut self, state: ChannelState) {
        self.state = state;
        self.segment += 1;
        self.trace.push(TraceEvent::Retune {
            first_block: self.next_block(),
            csi: Csi::from_state(&state),
        });
    }

    /// Sends block `p` and returns its zero-forced channel output.
    pub fn transmit_next_block<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Complex64>> {
        if self.is_complete() {
            return Err(Error::SessionComplete(self.total_blocks()));
        }
        let block = self.current.narrow(2, 0, 1)?;
        let symbols = latent::block_view_to_complex(&block, 0)?;
        self.trace.push(TraceEvent::Block {
            index: self.next_block(),
            segment: self.segment,
            csi: Csi::from_state(&self.state),
            power: average_power(&symbols),
        });
        let received = channel::equalize(&channel::transmit(&symbols, &self.state, rng), &self.state)?;
        let rest = self.remaining() - 1;
        if rest > 0 {
            self.current = self.current.narrow(2, 1, rest)?;
        }
        self.next += 1;
        Ok(received)
    }
}

/// Blocks `v..=t` received under one channel state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub first: usize,
    pub last: usize,
    pub state: ChannelState,
    pub csi: Csi,
    pub blocks: Vec<Vec<Complex64>>,
}

impl SegmentRecord {
    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn symbols(&self) -> Vec<Complex64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

/// Receiver-side bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    segments: Vec<SegmentRecord>,
    received: usize,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new segment under `state`.
    pub fn open_segment(&mut self, state: ChannelState) {
        self.segments.push(SegmentRecord {
            first: self.received + 1,
            last: self.received,
            state,
            csi: Csi::from_state(&state),
            blocks: Vec::new(),
        });
    }

    pub fn receive(&mut self, block: Vec<Complex64>) -> Result<()> {
        let seg = self
            .segments
            .last_mut()
            .ok_or_else(|| Error::Protocol("block received before any segment was opened".into()))?;
        seg.blocks.push(block);
        seg.last += 1;
        self.received += 1;
        Ok(())
    }

    pub fn received(&self) -> usize {
        self.received
    }

    pub fn segments(&self) -> &[SegmentRecord] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<SegmentRecord> {
        self.segments
    }
}

/// Checks that segments tile `1..=m` in order and returns the segments that
/// hold at least one block.
fn check_coverage(segments: &[SegmentRecord], m: usize, block_len: usize) -> Result<Vec<&SegmentRecord>> {
    let mut expect = 1;
    let mut used = Vec::new();
    for seg in segments {
        if seg.first != expect || seg.last + 1 < seg.first {
            return Err(Error::Protocol(format!(
                "segment {}..{} does not continue at block {expect}",
                seg.first, seg.last
            )));
        }
        if seg.blocks.len() != seg.len() || seg.blocks.iter().any(|b| b.len() != block_len) {
            return Err(Error::Protocol(format!(
                "segment {}..{} holds malformed blocks",
                seg.first, seg.last
            )));
        }
        expect = seg.last + 1;
        if !seg.is_empty() {
            used.push(seg);
        }
    }
    if expect != m + 1 {
        return Err(Error::Protocol(format!("segments cover blocks 1..{} of {m}", expect - 1)));
    }
    Ok(used)
}

/// Maps every segment to `h₀` space with the dynamic decoder (skipping the
/// first, which was sent under `h₀`), concatenates, and static-decodes.
pub fn receiver_finalize(segments: &[SegmentRecord], initial: Csi, model: &Drjscc) -> Result<ImageTensor> {
    let m = model.blocks();
    let used = check_coverage(segments, m, model.config().symbols() / m)?;
    let mut parts = Vec::with_capacity(used.len());
    for (i, seg) in used.iter().enumerate() {
        let view = latent::complex_to_block_view(&seg.symbols(), seg.len(), model.dtype(), model.device())?;
        if i == 0 && seg.first == 1 {
            parts.push(view);
        } else {
            parts.push(model.dynamic_decoder.forward(&view, &[initial], &[seg.csi], m)?);
        }
    }
    let z_hat = latent::from_block_view(&Tensor::cat(&parts, 2)?)?;
    ImageTensor::from_tensor(&model.decode(&z_hat, &[initial])?, 0)
}

/// Static-decodes the concatenated segments without any dynamic decoding.
pub fn receiver_finalize_static(
    segments: &[SegmentRecord],
    conditioning: Csi,
    model: &Drjscc,
) -> Result<ImageTensor> {
    let m = model.blocks();
    let used = check_coverage(segments, m, model.config().symbols() / m)?;
    let symbols: Vec<Complex64> = used.iter().flat_map(|s| s.symbols()).collect();
    let blocks = SymbolBlocks::new(symbols, m)?;
    model.static_decode(&blocks, conditioning)
}

/// Decodes from the first `count` segments only, with every later block
/// zeroed; shows how quality builds up as segments arrive.
pub fn decode_prefix(
    segments: &[SegmentRecord],
    count: usize,
    conditioning: Csi,
    variant: Variant,
    model: &Drjscc,
) -> Result<ImageTensor> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Protocol("no segments to decode".into()))?;
    let mut kept: Vec<SegmentRecord> = segments.iter().take(count).cloned().collect();
    let received: usize = kept.iter().map(SegmentRecord::len).sum();
    let m = model.blocks();
    if received < m {
        let zero = vec![Complex64::new(0.0, 0.0); model.config().symbols() / m];
        let state = first.state;
        kept.push(SegmentRecord {
            first: received + 1,
            last: m,
            state,
            csi: conditioning,
            blocks: vec![zero; m - received],
        });
    }
    if variant.refines() {
        receiver_finalize(&kept, conditioning, model)
    } else {
        receiver_finalize_static(&kept, conditioning, model)
    }
}

/// Everything a finished session produced.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub reconstruction: ImageTensor,
    pub trace: Vec<TraceEvent>,
    pub segments: Vec<SegmentRecord>,
}

/// Sends one image through `schedule` with the given variant's pipeline.
pub fn run_session<R: Rng + ?Sized>(
    model: &Drjscc,
    image: &ImageTensor,
    schedule: &EpisodeSchedule,
    variant: Variant,
    rng: &mut R,
) -> Result<SessionOutcome> {
    schedule.check_blocks(model.blocks())?;
    let initial_state = *schedule.initial_state();
    let conditioning = variant.conditioning(&schedule.per_block_csi());
    let mut tx = Transmitter::start_conditioned(model, image, initial_state, conditioning)?;
    let mut rx = Receiver::new();
    for (j, seg) in schedule.segments().iter().enumerate() {
        if j > 0 {
            if variant.refines() {
                tx.on_csi_change(seg.state)?;
            } else {
                tx.retune(seg.state);
            }
        }
        rx.open_segment(seg.state);
        for _ in 0..seg.blocks {
            rx.receive(tx.transmit_next_block(rng)?)?;
        }
    }
    let segments = rx.into_segments();
    let reconstruction = if variant.refines() {
        receiver_finalize(&segments, conditioning, model)?
    } else {
        receiver_finalize_static(&segments, conditioning, model)?
    };
    Ok(SessionOutcome {
        reconstruction,
        trace: tx.trace().to_vec(),
        segments,
    })
}
