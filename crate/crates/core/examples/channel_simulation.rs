//! AWGN and Rayleigh block fading with zero-forcing equalization.
//!
//! `cargo run --example channel_simulation`

use drjscc::channel::{self, ChannelState};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 50_000;

fn main() -> drjscc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let symbols: Vec<Complex64> = (0..N)
        .map(|i| Complex64::from_polar(1.0, i as f64 * 0.37))
        .collect();

    println!("AWGN, unit-power symbols:");
    for snr_db in [1.0, 7.0, 13.0, 19.0] {
        let state = ChannelState::awgn_db(snr_db)?;
        let y = channel::equalize(&channel::transmit(&symbols, &state, &mut rng), &state)?;
        let noise = mse(&symbols, &y);
        println!("  {snr_db:>4} dB: sigma^2 = {:.4}, measured {noise:.4}", state.sigma2());
    }

    println!("Rayleigh, sigma^2 = 0.1, one fade per block:");
    for _ in 0..5 {
        let state = channel::sample_rayleigh_state(&mut rng, 0.1)?;
        let y = channel::equalize(&channel::transmit(&symbols, &state, &mut rng), &state)?;
        println!(
            "  |h| = {:.3}, effective SNR {:>6.2} dB, equalized noise {:.4}",
            state.gain().norm(),
            state.effective_snr_db(1.0),
            mse(&symbols, &y)
        );
    }
    Ok(())
}

fn mse(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64
}
