//! Block-fading channel simulation: `ẑ = h·z + n`, `n ~ CN(0, σ²I)`.
//!
//! Two implementations share the same noise draw order (per symbol: real
//! then imaginary): a reference one over `Complex64` slices used by the
//! protocol, and a differentiable one over interleaved real tensors used in
//! training. Noise and gain are constants with respect to the gradient.

use candle_core::Tensor;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gains below this magnitude cannot be zero-forced.
pub const OUTAGE_FLOOR: f64 = 1e-9;

/// SNR values outside this window are clamped before they reach a network.
pub const CSI_DB_CLAMP: (f64, f64) = (-30.0, 50.0);

/// `P / 10^(snr_db/10)`.
pub fn snr_to_sigma2(snr_db: f64, power: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

pub fn sigma2_to_snr_db(sigma2: f64, power: f64) -> f64 {
    10.0 * (power / sigma2).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

/// Gain and noise variance for one coherence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    gain: Complex64,
    sigma2: f64,
    kind: ChannelKind,
}

impl ChannelState {
    pub fn awgn(sigma2: f64) -> Result<Self> {
        Self::check_sigma2(sigma2)?;
        Ok(Self {
            gain: Complex64::new(1.0, 0.0),
            sigma2,
            kind: ChannelKind::Awgn,
        })
    }

    /// AWGN at a given SNR with unit signal power.
    pub fn awgn_db(snr_db: f64) -> Result<Self> {
        Self::awgn(snr_to_sigma2(snr_db, 1.0))
    }

    pub fn rayleigh(gain: Complex64, sigma2: f64) -> Result<Self> {
        Self::check_sigma2(sigma2)?;
        if !gain.re.is_finite() || !gain.im.is_finite() {
            return Err(Error::Config(format!("non-finite channel gain {gain}")));
        }
        Ok(Self {
            gain,
            sigma2,
            kind: ChannelKind::Rayleigh,
        })
    }

    fn check_sigma2(sigma2: f64) -> Result<()> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(())
    }

    pub fn gain(&self) -> Complex64 {
        self.gain
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    /// Post-equalization SNR `|h|²·P/σ²` (linear).
    pub fn effective_snr(&self, power: f64) -> f64 {
        self.gain.norm_sqr() * power / self.sigma2
    }

    pub fn effective_snr_db(&self, power: f64) -> f64 {
        10.0 * self.effective_snr(power).log10()
    }
}

/// Channel knowledge handed to the networks after zero-forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Csi {
    /// Effective SNR in dB, clamped to [`CSI_DB_CLAMP`].
    pub snr_db: f64,
    /// `|h|`.
    pub gain: f64,
}

impl Csi {
    pub fn from_state(state: &ChannelState) -> Self {
        let snr_db = state
            .effective_snr_db(1.0)
            .clamp(CSI_DB_CLAMP.0, CSI_DB_CLAMP.1);
        Self {
            snr_db,
            gain: state.gain().norm(),
        }
    }

    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            snr_db: snr_db.clamp(CSI_DB_CLAMP.0, CSI_DB_CLAMP.1),
            gain: 1.0,
        }
    }

    /// True when this channel is at least as good as `initial`, which is the
    /// case where no refinement happens. Under a common noise floor this is
    /// `|h_n| >= |h_0|`.
    pub fn no_worse_than(&self, initial: &Csi) -> bool {
        self.snr_db >= initial.snr_db
    }

    /// Mean effective SNR (dB) over blocks, used by the static baselines.
    pub fn block_mean(per_block: &[Csi]) -> Self {
        let n = per_block.len().max(1) as f64;
        Self {
            snr_db: per_block.iter().map(|c| c.snr_db).sum::<f64>() / n,
            gain: per_block.iter().map(|c| c.gain).sum::<f64>() / n,
        }
    }
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Complex64 {
    let std = (sigma2 / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * std, im * std)
}

/// `h·z + n` with fresh i.i.d. `CN(0, σ²)` noise per symbol.
pub fn transmit<R: Rng + ?Sized>(z: &[Complex64], state: &ChannelState, rng: &mut R) -> Vec<Complex64> {
    z.iter()
        .map(|s| state.gain * s + complex_noise(rng, state.sigma2))
        .collect()
}

/// `h·z` without noise.
pub fn transmit_noiseless(z: &[Complex64], state: &ChannelState) -> Vec<Complex64> {
    z.iter().map(|s| state.gain * s).collect()
}

/// Zero-forcing: `ẑ / h`.
pub fn equalize(z_hat: &[Complex64], state: &ChannelState) -> Result<Vec<Complex64>> {
    let magnitude = state.gain.norm();
    if magnitude < OUTAGE_FLOOR {
        return Err(Error::Outage { magnitude });
    }
    Ok(z_hat.iter().map(|s| s / state.gain).collect())
}

/// `h ~ CN(0, 1)` paired with `sigma2`.
pub fn sample_rayleigh_state<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Result<ChannelState> {
    loop {
        let gain = complex_noise(rng, 1.0);
        // an exact outage has probability ~1e-18 per draw; redraw rather than fail
        if gain.norm() >= OUTAGE_FLOOR {
            return ChannelState::rayleigh(gain, sigma2);
        }
    }
}

/// Differentiable `h·z + n` on `(B, 2n)` interleaved rows, one state per row.
pub fn transmit_tensor<R: Rng + ?Sized>(
    z: &Tensor,
    states: &[ChannelState],
    rng: &mut R,
) -> Result<Tensor> {
    let (b, n) = z.dims2()?;
    check_rows(b, n, states)?;
    let mut noise = Vec::with_capacity(b * n);
    for state in states {
        for _ in 0..n / 2 {
            let e = complex_noise(rng, state.sigma2);
            noise.push(e.re);
            noise.push(e.im);
        }
    }
    let noise = Tensor::from_vec(noise, (b, n), z.device())?.to_dtype(z.dtype())?;
    let gains: Vec<Complex64> = states.iter().map(|s| s.gain).collect();
    Ok((complex_scale(z, &gains)? + noise)?)
}

/// Differentiable zero-forcing on `(B, 2n)` interleaved rows.
pub fn equalize_tensor(z_hat: &Tensor, states: &[ChannelState]) -> Result<Tensor> {
    let (b, n) = z_hat.dims2()?;
    check_rows(b, n, states)?;
    let mut inverse = Vec::with_capacity(b);
    for s in states {
        let magnitude = s.gain.norm();
        if magnitude < OUTAGE_FLOOR {
            return Err(Error::Outage { magnitude });
        }
        inverse.push(s.gain.inv());
    }
    complex_scale(z_hat, &inverse)
}

/// Transmits and equalizes a `(B, d, c)` block view.
pub fn transmit_blocks<R: Rng + ?Sized>(
    blocks: &Tensor,
    states: &[ChannelState],
    rng: &mut R,
) -> Result<Tensor> {
    let (b, d, c) = blocks.dims3()?;
    let flat = blocks.transpose(1, 2)?.contiguous()?.reshape((b, c * d))?;
    let received = equalize_tensor(&transmit_tensor(&flat, states, rng)?, states)?;
    Ok(received.reshape((b, c, d))?.transpose(1, 2)?.contiguous()?)
}

fn check_rows(b: usize, n: usize, states: &[ChannelState]) -> Result<()> {
    if states.len() != b {
        return Err(Error::Shape(format!("{} channel states for {b} rows", states.len())));
    }
    if n % 2 != 0 {
        return Err(Error::Shape(format!("odd interleaved width {n}")));
    }
    Ok(())
}

/// Multiplies each row's complex symbols by a per-row complex factor.
fn complex_scale(z: &Tensor, factors: &[Complex64]) -> Result<Tensor> {
    let (b, n) = z.dims2()?;
    let dev = z.device();
    let pairs = z.reshape((b, n / 2, 2))?;
    let re = pairs.narrow(2, 0, 1)?;
    let im = pairs.narrow(2, 1, 1)?;
    let column = |v: Vec<f64>| -> Result<Tensor> {
        Ok(Tensor::from_vec(v, (b, 1, 1), dev)?.to_dtype(z.dtype())?)
    };
    let a = column(factors.iter().map(|f| f.re).collect())?;
    let c = column(factors.iter().map(|f| f.im).collect())?;
    let out_re = (re.broadcast_mul(&a)? - im.broadcast_mul(&c)?)?;
    let out_im = (re.broadcast_mul(&c)? + im.broadcast_mul(&a)?)?;
    Ok(Tensor::cat(&[out_re, out_im], 2)?.reshape((b, n))?)
}

/// A run of consecutive blocks sent under one channel state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub blocks: usize,
    pub state: ChannelState,
}

/// The channel states one image experiences, segment by segment. Segment 0
/// carries `h_0`, the state the static encoder is conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSchedule {
    segments: Vec<Segment>,
}

impl EpisodeSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Schedule("a schedule needs at least one segment".into()));
        }
        if segments.iter().any(|s| s.blocks == 0) {
            return Err(Error::Schedule("segment with zero blocks".into()));
        }
        Ok(Self { segments })
    }

    /// One segment covering all `m` blocks.
    pub fn constant(state: ChannelState, m: usize) -> Result<Self> {
        Self::new(vec![Segment { blocks: m, state }])
    }

    /// AWGN segments from `(snr_db, block_count)` pairs.
    pub fn awgn(parts: &[(f64, usize)]) -> Result<Self> {
        let segments = parts
            .iter()
            .map(|&(snr, blocks)| Ok(Segment { blocks, state: ChannelState::awgn_db(snr)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(segments)
    }

    /// Parses the legend notation `SNR=(S1,S2,...),C=(C1,C2,...)`.
    pub fn parse_legend(text: &str) -> Result<Self> {
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let rest = compact
            .strip_prefix("SNR=(")
            .ok_or_else(|| Error::Schedule(format!("expected `SNR=(...)` in {text:?}")))?;
        let (snrs, rest) = rest
            .split_once(")")
            .ok_or_else(|| Error::Schedule(format!("unclosed SNR list in {text:?}")))?;
        let counts = rest
            .strip_prefix(",C=(")
            .and_then(|r| r.strip_suffix(")"))
            .ok_or_else(|| Error::Schedule(format!("expected `,C=(...)` in {text:?}")))?;
        let snrs: Vec<f64> = snrs
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Schedule(format!("bad SNR value {s:?}"))))
            .collect::<Result<_>>()?;
        let counts: Vec<usize> = counts
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Schedule(format!("bad block count {s:?}"))))
            .collect::<Result<_>>()?;
        if snrs.len() != counts.len() {
            return Err(Error::Schedule(format!(
                "{} SNR values but {} block counts",
                snrs.len(),
                counts.len()
            )));
        }
        Self::awgn(&snrs.into_iter().zip(counts).collect::<Vec<_>>())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn initial_state(&self) -> &ChannelState {
        &self.segments[0].state
    }

    pub fn total_blocks(&self) -> usize {
        self.segments.iter().map(|s| s.blocks).sum()
    }

    pub fn check_blocks(&self, m: usize) -> Result<()> {
        let total = self.total_blocks();
        if total != m {
            return Err(Error::Schedule(format!(
                "schedule covers {total} blocks but the codec uses m = {m}"
            )));
        }
        Ok(())
    }

    /// 1-indexed inclusive `(v, t)` block ranges of every segment.
    pub fn boundaries(&self) -> Vec<(usize, usize)> {
        let mut first = 1;
        self.segments
            .iter()
            .map(|s| {
                let range = (first, first + s.blocks - 1);
                first += s.blocks;
                range
            })
            .collect()
    }

    /// State in force for block `i` (1-indexed).
    pub fn state_for_block(&self, i: usize) -> Option<&ChannelState> {
        self.boundaries()
            .into_iter()
            .zip(&self.segments)
            .find(|((v, t), _)| (*v..=*t).contains(&i))
            .map(|(_, s)| &s.state)
    }

    pub fn per_block_csi(&self) -> Vec<Csi> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(Csi::from_state(&s.state), s.blocks))
            .collect()
    }

    /// Same segmentation with every state replaced by the initial one.
    pub fn flattened(&self) -> Self {
        let s0 = *self.initial_state();
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment { blocks: s.blocks, state: s0 })
                .collect(),
        }
    }

    /// Segment lengths.
    pub fn structure(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.blocks).collect()
    }
}

/// How training and evaluation episodes draw channel states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// One AWGN SNR per image, uniform in `[low, high]` dB.
    Static { low_db: f64, high_db: f64 },
    /// One fixed AWGN SNR for every image.
    FixedSnr { snr_db: f64 },
    /// An independent uniform AWGN SNR for every block.
    PerBlock { low_db: f64, high_db: f64 },
    /// `1..=max_changes` changes at uniformly drawn block boundaries.
    Segmented { low_db: f64, high_db: f64, max_changes: usize },
    /// Rayleigh block fading, a fresh `h ~ CN(0,1)` every `coherence` blocks.
    Rayleigh { coherence: usize, sigma2: f64 },
}

impl Regime {
    /// Segment lengths for an `m`-block image.
    pub fn sample_structure<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        Ok(match *self {
            Regime::Static { .. } | Regime::FixedSnr { .. } => vec![m],
            Regime::PerBlock { .. } => vec![1; m],
            Regime::Segmented { max_changes, .. } => {
                let changes = if m == 1 || max_changes == 0 {
                    0
                } else {
                    rng.random_range(1..=max_changes.min(m - 1))
                };
                let mut cuts: Vec<usize> = rand::seq::index::sample(rng, m - 1, changes)
                    .into_iter()
                    .map(|c| c + 1)
                    .collect();
                cuts.sort_unstable();
                let mut prev = 0;
                let mut lens: Vec<usize> = cuts
                    .into_iter()
                    .map(|c| {
                        let len = c - prev;
                        prev = c;
                        len
                    })
                    .collect();
                lens.push(m - prev);
                lens
            }
            Regime::Rayleigh { coherence, .. } => {
                if coherence == 0 {
                    return Err(Error::Config("coherence length must be positive".into()));
                }
                let mut lens = vec![coherence.min(m); m / coherence.min(m)];
                if m % coherence != 0 && coherence < m {
                    lens.push(m % coherence);
                }
                lens
            }
        })
    }

    /// One independent state for a segment.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelState> {
        match *self {
            Regime::Static { low_db, high_db }
            | Regime::PerBlock { low_db, high_db }
            | Regime::Segmented { low_db, high_db, .. } => {
                ChannelState::awgn_db(sample_uniform(rng, low_db, high_db)?)
            }
            Regime::FixedSnr { snr_db } => ChannelState::awgn_db(snr_db),
            Regime::Rayleigh { sigma2, .. } => sample_rayleigh_state(rng, sigma2),
        }
    }
}

fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, low: f64, high: f64) -> Result<f64> {
    if low == high {
        return Ok(low);
    }
    let dist = Uniform::new_inclusive(low, high)
        .map_err(|e| Error::Config(format!("SNR range [{low}, {high}]: {e}")))?;
    Ok(dist.sample(rng))
}

/// Draws a full schedule for one `m`-block image.
pub fn sample_training_episode<R: Rng + ?Sized>(
    regime: &Regime,
    m: usize,
    rng: &mut R,
) -> Result<EpisodeSchedule> {
    let structure = regime.sample_structure(m, rng)?;
    let segments = structure
        .into_iter()
        .map(|blocks| Ok(Segment { blocks, state: regime.sample_state(rng)? }))
        .collect::<Result<Vec<_>>>()?;
    EpisodeSchedule::new(segments)
}
