//! The batched training pipeline and the per-image protocol agree.

use candle_core::{DType, Device};
use drjscc::channel::{ChannelState, EpisodeSchedule, Segment};
use drjscc::dataset;
use drjscc::latent::{stack_images, ImageTensor};
use drjscc::model::{Drjscc, ModelConfig, Variant};
use drjscc::protocol::run_session;
use drjscc::training::{episode_forward, EpisodeBatch};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schedules() -> Vec<EpisodeSchedule> {
    let fading = |re: f64, im: f64, sigma2: f64| ChannelState::rayleigh(Complex64::new(re, im), sigma2).unwrap();
    vec![
        EpisodeSchedule::parse_legend("SNR=(14),C=(8)").unwrap(),
        EpisodeSchedule::parse_legend("SNR=(19,1),C=(2,6)").unwrap(),
        EpisodeSchedule::parse_legend("SNR=(3,17,6),C=(3,2,3)").unwrap(),
        EpisodeSchedule::parse_legend("SNR=(19,3,11,5,17,2,8,14),C=(1,1,1,1,1,1,1,1)").unwrap(),
        EpisodeSchedule::new(vec![
            Segment { blocks: 4, state: fading(1.2, -0.3, 0.05) },
            Segment { blocks: 4, state: fading(0.2, 0.4, 0.05) },
        ])
        .unwrap(),
    ]
}

#[test]
fn batched_episode_matches_protocol_session() {
    let model = Drjscc::new(ModelConfig::cifar([1, 12], 8, (4, 8)).unwrap(), 12, DType::F64, &Device::Cpu).unwrap();
    let image = dataset::synthetic(1, 33).images()[0].clone();
    let x = stack_images(&[&image], DType::F64, &Device::Cpu).unwrap();
    for variant in [Variant::Drjscc, Variant::StaticOnly, Variant::StaticFixedSnr { snr_db: 10.0 }] {
        for schedule in schedules() {
            let batch = EpisodeBatch::from_schedules(std::slice::from_ref(&schedule)).unwrap();
            let batched = episode_forward(&model, &x, &batch, variant, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let batched = ImageTensor::from_tensor(&batched, 0).unwrap();
            let session =
                run_session(&model, &image, &schedule, variant, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let worst = batched
                .pixels()
                .iter()
                .zip(session.reconstruction.pixels())
                .map(|(a, b)| (a - b).abs())
                .fold(0f32, f32::max);
            assert!(worst < 1e-5, "{variant:?} {:?}: max pixel difference {worst}", schedule.structure());
        }
    }
}
