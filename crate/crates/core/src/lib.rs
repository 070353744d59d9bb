//! Refinement-based deep joint source-channel coding (DRJSCC) for images.
//!
//! An image is encoded once into `k` complex channel symbols, split into `m`
//! equal blocks and sent progressively. Whenever the channel state changes
//! mid-image, the untransmitted blocks are re-encoded from the original
//! encoding for the new channel. The receiver maps every segment back to the
//! initial-channel space before static decoding.
//!
//! ```text
//!  image ──► static encoder (IC) ──► z^{h0} = [b1 b2 | b3 b4 | b5 .. bm]
//!                                        │        │        │
//!                          sent under h0 ┘        │        │
//!               re-encoded from z^{h0}[3..] for h1┘        │
//!               re-encoded from z^{h0}[5..] for h2 ────────┘
//!
//!  receiver: [seg h0 | dyn-decode(seg h1) | dyn-decode(seg h2)] ──► static decoder ──► x̂
//! ```
//!
//! Module map:
//! - [`latent`]: block partitioning, real/complex mapping, power normalization
//! - [`channel`]: AWGN and Rayleigh block-fading simulation, equalization, schedules
//! - [`codec_static`]: the attention-conditioned initial encoder and static decoder
//! - [`codec_dynamic`]: the re-coding module and its mirrored dynamic decoder
//! - [`protocol`]: the per-image transmitter/receiver state machine
//! - [`training`]: differentiable episodes, AdamW, checkpoints, the training loop
//! - [`evaluation`]: PSNR, scenario suites, results export and plots
//! - [`dataset`], [`config`]: CIFAR-10 ingestion and run configuration

pub mod channel;
pub mod cli;
pub mod codec_dynamic;
pub mod codec_static;
pub mod config;
pub mod dataset;
mod error;
pub mod evaluation;
pub mod latent;
pub mod model;
pub mod nn;
pub mod protocol;
pub mod training;

pub use channel::{ChannelKind, ChannelState, Csi, EpisodeSchedule, Regime, Segment};
pub use error::{Error, Result};
pub use latent::{ImageTensor, SymbolBlocks};
pub use model::{Drjscc, ModelConfig, Variant};
