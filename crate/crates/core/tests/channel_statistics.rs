//! Monte-Carlo checks of the channel simulator.

use std::f64::consts::PI;

use drjscc::channel::{self, ChannelState};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 100_000;

#[test]
fn awgn_noise_has_the_configured_variance_split_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for snr_db in [0.0, 7.0, 19.0] {
        let state = ChannelState::awgn_db(snr_db).unwrap();
        let z = vec![Complex64::new(0.0, 0.0); N];
        let y = channel::transmit(&z, &state, &mut rng);
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / N as f64;
        let re = y.iter().map(|v| v.re * v.re).sum::<f64>() / N as f64;
        let mean = y.iter().sum::<Complex64>() / N as f64;
        let s2 = state.sigma2();
        assert!((var / s2 - 1.0).abs() < 0.05, "{snr_db} dB: {var} vs {s2}");
        assert!((re / (s2 / 2.0) - 1.0).abs() < 0.05);
        assert!(mean.norm() < 5.0 * (s2 / N as f64).sqrt());
    }
}

#[test]
fn rayleigh_gains_have_unit_power_and_uniform_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gains: Vec<Complex64> = (0..N)
        .map(|_| channel::sample_rayleigh_state(&mut rng, 0.1).unwrap().gain())
        .collect();
    let power = gains.iter().map(|h| h.norm_sqr()).sum::<f64>() / N as f64;
    assert!((power - 1.0).abs() < 0.02, "E|h|^2 = {power}");

    // Kolmogorov-Smirnov against U(-pi, pi] at the 1% level
    let mut phases: Vec<f64> = gains.iter().map(|h| h.arg()).collect();
    phases.sort_by(f64::total_cmp);
    let d = phases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let cdf = (p + PI) / (2.0 * PI);
            (cdf - i as f64 / N as f64).abs().max(((i + 1) as f64 / N as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / (N as f64).sqrt(), "KS statistic {d}");

    // |h|^2 is Exp(1): P(|h|^2 < 1) = 1 - 1/e
    let below = gains.iter().filter(|h| h.norm_sqr() < 1.0).count() as f64 / N as f64;
    assert!((below - (1.0 - (-1.0f64).exp())).abs() < 0.01);
}

#[test]
fn noiseless_transmission_then_equalization_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<Complex64> = (0..1000).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
    for _ in 0..100 {
        let state = channel::sample_rayleigh_state(&mut rng, 1.0).unwrap();
        let back = channel::equalize(&channel::transmit_noiseless(&z, &state), &state).unwrap();
        let err = z.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "gain {}: error {err}", state.gain());
    }
}

#[test]
fn equalized_noise_scales_with_the_fade() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let state = ChannelState::rayleigh(Complex64::new(0.3, 0.4), 0.2).unwrap();
    let z = vec![Complex64::new(1.0, -1.0); N];
    let y = channel::equalize(&channel::transmit(&z, &state, &mut rng), &state).unwrap();
    let var = y.iter().zip(&z).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / N as f64;
    let expected = 0.2 / 0.25;
    assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    assert!((state.effective_snr(1.0) - 0.25 / 0.2).abs() < 1e-12);
}
