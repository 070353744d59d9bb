//! One image through a changing channel, step by step.
//!
//! Uses freshly initialized weights, so the reconstruction is noise; the
//! point is the order of events.
//!
//! `cargo run --example protocol_walkthrough -- "SNR=(19,4,11),C=(2,3,3)"`

use candle_core::{DType, Device};
use drjscc::channel::EpisodeSchedule;
use drjscc::protocol::{receiver_finalize, Receiver, TraceEvent, Transmitter};
use drjscc::{dataset, evaluation, Drjscc, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> drjscc::Result<()> {
    let legend = std::env::args().nth(1).unwrap_or_else(|| "SNR=(19,4,11),C=(2,3,3)".into());
    let schedule = EpisodeSchedule::parse_legend(&legend)?;
    let model = Drjscc::new(ModelConfig::desk([1, 12], 8)?, 0, DType::F32, &Device::Cpu)?;
    let image = dataset::synthetic(1, 0).images()[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut tx = Transmitter::start(&model, &image, *schedule.initial_state())?;
    let mut rx = Receiver::new();
    for (j, seg) in schedule.segments().iter().enumerate() {
        if j > 0 {
            tx.on_csi_change(seg.state)?;
        }
        rx.open_segment(seg.state);
        for _ in 0..seg.blocks {
            rx.receive(tx.transmit_next_block(&mut rng)?)?;
        }
    }
    for event in tx.trace() {
        match event {
            TraceEvent::Start { csi, blocks, power, .. } => {
                println!("start      {blocks} blocks at {:.1} dB, power {power:.6}", csi.snr_db)
            }
            TraceEvent::ReEncode { first_block, remaining, csi, bypassed, power, .. } => println!(
                "re-encode  blocks {first_block}..{} for {:.1} dB{}, power {power:.6}",
                first_block + remaining - 1,
                csi.snr_db,
                if *bypassed { " (channel improved, passed through)" } else { "" }
            ),
            TraceEvent::Retune { first_block, csi } => println!("retune     at block {first_block}, {:.1} dB", csi.snr_db),
            TraceEvent::Block { index, segment, csi, power } => {
                println!("send       block {index} in segment {segment} at {:.1} dB, power {power:.3}", csi.snr_db)
            }
        }
    }
    for seg in rx.segments() {
        println!("received   blocks {}..{} under {:.1} dB", seg.first, seg.last, seg.csi.snr_db);
    }
    let x_hat = receiver_finalize(rx.segments(), tx.initial_csi(), &model)?;
    println!("PSNR {:.2} dB (untrained)", evaluation::psnr(&image, &x_hat)?);
    Ok(())
}
