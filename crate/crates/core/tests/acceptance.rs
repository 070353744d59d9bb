//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs every criterion in order and exits non-zero if any fails. Set
//! `DRJSCC_ACCEPTANCE=1,4,7` to run a subset. Trained desk-scale models are
//! cached under `DRJSCC_ACCEPTANCE_CACHE` (default: the cargo target tmpdir),
//! keyed by the hash of the model, training and data configuration, so a
//! rerun repeats the same deterministic training only once.

use std::collections::HashMap;
use std::error::Error as StdError;
use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{VarBuilder, VarMap};
use drjscc::channel::{self, ChannelState, Csi, EpisodeSchedule, Regime, Segment};
use drjscc::codec_dynamic::{aggregate, disperse, DisperseMatrix, RcModule, RcShape};
use drjscc::config::{config_hash, DataConfig, PathsConfig, RunConfig};
use drjscc::dataset::{self, Dataset, Split, DATA_ROOT_ENV};
use drjscc::evaluation::{self, psnr_from_mse, psnr_with_max, run_scenario, suites, ModelTag, ScenarioSpec};
use drjscc::latent::{self, ImageTensor};
use drjscc::model::{Drjscc, ModelConfig, Variant};
use drjscc::nn::{self, CsiScale};
use drjscc::protocol::{receiver_finalize, receiver_finalize_static, Receiver, SegmentRecord, TraceEvent, Transmitter};
use drjscc::training::{checkpoint, TrainConfig, Trainer};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<Verdict, Box<dyn StdError>>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Outcome {
    Ok(Verdict { pass, detail: detail.into() })
}

const SEED: u64 = 1;
const EVAL_SEED: u64 = 2024;

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 12] = [
        ("1", "dispersing matrix oracle", dispersing_matrix_oracle),
        ("2", "adjointness and RC gradient", adjointness_and_gradient),
        ("3", "lambda-gate bypass", lambda_gate_bypass),
        ("4", "power constraint", power_constraint),
        ("5", "protocol provenance and conservation", protocol_provenance),
        ("6", "channel statistics", channel_statistics),
        ("7", "desk-scale training smoke test", training_smoke_test),
        ("8", "refinement benefit trend", refinement_benefit),
        ("9", "Rayleigh robustness trend", rayleigh_robustness),
        ("10", "PSNR metric", psnr_metric),
        ("11", "reproducibility", reproducibility),
        ("8s", "dynamic decoder composition (supplementary)", dynamic_decoder_composition),
    ];
    let selected: Option<Vec<String>> = std::env::var("DRJSCC_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').map(|v| v.trim().to_string()).collect());
    let mut failed = 0;
    for (n, title, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.iter().any(|v| v == n)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(Ok(v)) => (v.pass, v.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(p) => (false, format!("panic: {}", panic_message(&p))),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {n:>2} {} {title}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "non-string payload".into())
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Result<Tensor, Box<dyn StdError>> {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(Tensor::from_vec(values, shape, &Device::Cpu)?)
}

fn values(t: &Tensor) -> Result<Vec<f64>, Box<dyn StdError>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dispersing_matrix_oracle() -> Outcome {
    let mut shapes = 0;
    for m in 1..=16 {
        for c in 1..=m {
            let matrix = DisperseMatrix::new(c, m)?;
            let k = m - c + 1;
            for i in 0..c {
                for j in 0..m {
                    let expected = if j >= i && j < i + k { 1.0 / k as f64 } else { 0.0 };
                    if matrix.get(i, j) != expected {
                        return verdict(false, format!("c={c} m={m}: entry ({i},{j}) is {}", matrix.get(i, j)));
                    }
                }
                let row: f64 = (0..m).map(|j| matrix.get(i, j)).sum();
                if (row - 1.0).abs() > 1e-12 {
                    return verdict(false, format!("c={c} m={m}: row {i} sums to {row}"));
                }
            }
            shapes += 1;
        }
    }
    verdict(true, format!("{shapes} shapes match entry-for-entry, rows sum to 1"))
}

fn adjointness_and_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shapes = [(1, 2), (1, 8), (3, 8), (7, 8), (8, 8), (2, 16), (5, 16), (11, 16), (16, 16), (4, 12)];
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (c, m) = shapes[i % shapes.len()];
        let matrix = DisperseMatrix::new(c, m)?;
        let u = random_tensor(&mut rng, &[2, 6, c])?;
        let v = random_tensor(&mut rng, &[2, 6, m])?;
        let lhs = dot(&values(&disperse(&u, &matrix)?)?, &values(&v)?);
        let rhs = dot(&values(&u)?, &values(&aggregate(&v, &matrix)?)?);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));
    }
    if worst > 1e-6 {
        return verdict(false, format!("adjoint mismatch {worst:.2e}"));
    }

    let dev = Device::Cpu;
    let mut grad_worst: f64 = 0.0;
    for power in [Some(1.0), None] {
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F64, &dev);
        let shape = RcShape { block_width: 8, kernel: 3, layers: 5, af_hidden: 16, lambda_hidden: 16 };
        let rc = RcModule::new(shape, CsiScale { low_db: 0.0, high_db: 20.0 }, power, vb)?;
        nn::init_parameters(&varmap, 5)?;
        let (initial, current) = ([Csi::from_snr_db(18.0)], [Csi::from_snr_db(4.0)]);
        let x0 = values(&random_tensor(&mut rng, &[1, 8, 3])?)?;
        let w = random_tensor(&mut rng, &[1, 8, 3])?;
        let objective = |x: &Tensor| -> Result<f64, Box<dyn StdError>> {
            Ok((rc.forward(x, &initial, &current, 8)? * &w)?.sum_all()?.to_scalar::<f64>()?)
        };
        let var = Var::from_tensor(&Tensor::from_vec(x0.clone(), (1, 8, 3), &dev)?)?;
        let out = (rc.forward(var.as_tensor(), &initial, &current, 8)? * &w)?.sum_all()?;
        let grads = out.backward()?;
        let g = values(grads.get(var.as_tensor()).ok_or("no input gradient")?)?;
        let h = 1e-6;
        for i in 0..x0.len() {
            let (mut up, mut down) = (x0.clone(), x0.clone());
            up[i] += h;
            down[i] -= h;
            let numeric = (objective(&Tensor::from_vec(up, (1, 8, 3), &dev)?)?
                - objective(&Tensor::from_vec(down, (1, 8, 3), &dev)?)?)
                / (2.0 * h);
            let scale = numeric.abs().max(g[i].abs()).max(1e-6);
            grad_worst = grad_worst.max((numeric - g[i]).abs() / scale);
        }
    }
    verdict(
        grad_worst < 1e-3,
        format!("100 adjoint draws over 10 shapes, worst {worst:.1e}; RC input gradient worst relative error {grad_worst:.1e}"),
    )
}

fn lambda_gate_bypass() -> Outcome {
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F64, &Device::Cpu);
    let shape = RcShape { block_width: 16, kernel: 3, layers: 5, af_hidden: 16, lambda_hidden: 16 };
    let rc = RcModule::new(shape, CsiScale { low_db: 0.0, high_db: 20.0 }, Some(1.0), vb)?;
    nn::init_parameters(&varmap, 9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for pair in 0..1000 {
        let m = rng.random_range(2..=16);
        let c = rng.random_range(1..=m);
        let sigma2 = rng.random_range(0.01..1.0);
        let h0 = channel::sample_rayleigh_state(&mut rng, sigma2)?.gain();
        let hn = channel::sample_rayleigh_state(&mut rng, sigma2)?.gain();
        let (h0, hn) = if h0.norm() <= hn.norm() { (h0, hn) } else { (hn, h0) };
        let initial = Csi::from_state(&ChannelState::rayleigh(h0, sigma2)?);
        let current = Csi::from_state(&ChannelState::rayleigh(hn, sigma2)?);
        let x = random_tensor(&mut rng, &[1, 16, c])?;
        let y = rc.forward(&x, &[initial], &[current], m)?;
        let same = values(&x)?.iter().zip(values(&y)?).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return verdict(false, format!("pair {pair}: |h0|={} |hn|={} changed the features", h0.norm(), hn.norm()));
        }
    }
    verdict(true, "1000 improved-channel pairs pass through bit-identically")
}

fn random_state(rng: &mut ChaCha8Rng) -> Result<ChannelState, Box<dyn StdError>> {
    Ok(if rng.random_bool(0.5) {
        ChannelState::awgn_db(rng.random_range(-5.0..25.0))?
    } else {
        let sigma2 = rng.random_range(0.01..1.0);
        channel::sample_rayleigh_state(rng, sigma2)?
    })
}

fn random_schedule(rng: &mut ChaCha8Rng, m: usize) -> Result<EpisodeSchedule, Box<dyn StdError>> {
    let regime = Regime::Segmented { low_db: 0.0, high_db: 20.0, max_changes: m - 1 };
    let structure = regime.sample_structure(m, rng)?;
    let segments = structure
        .into_iter()
        .map(|blocks| Ok(Segment { blocks, state: random_state(rng)? }))
        .collect::<Result<Vec<_>, Box<dyn StdError>>>()?;
    Ok(EpisodeSchedule::new(segments)?)
}

fn probe_models() -> Result<Vec<Drjscc>, Box<dyn StdError>> {
    Ok(vec![
        Drjscc::new(ModelConfig::desk([1, 12], 8)?, 4, DType::F64, &Device::Cpu)?,
        Drjscc::new(ModelConfig::desk([1, 6], 16)?, 5, DType::F64, &Device::Cpu)?,
    ])
}

fn power_constraint() -> Outcome {
    let models = probe_models()?;
    let images = dataset::synthetic(50, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut vectors, mut worst, mut passthrough) = (0usize, 0f64, 0usize);
    for session in 0..1000 {
        let model = &models[session % models.len()];
        let image = &images.images()[session % images.len()];
        let schedule = random_schedule(&mut rng, model.blocks())?;
        let mut tx = Transmitter::start(model, image, *schedule.initial_state())?;
        let mut check = |tx: &Transmitter| -> Result<(), Box<dyn StdError>> {
            let p = tx.current_encoding()?.average_power();
            worst = worst.max((p - 1.0).abs());
            vectors += 1;
            Ok(())
        };
        check(&tx)?;
        for (j, seg) in schedule.segments().iter().enumerate() {
            if j > 0 {
                tx.on_csi_change(seg.state)?;
                if Csi::from_state(&seg.state).no_worse_than(&tx.initial_csi()) {
                    passthrough += 1;
                } else {
                    check(&tx)?;
                }
            }
            for _ in 0..seg.blocks {
                tx.transmit_next_block(&mut rng)?;
            }
        }
        for event in tx.trace() {
            if let TraceEvent::Start { power, .. } | TraceEvent::ReEncode { power, bypassed: false, .. } = event {
                worst = worst.max((power - 1.0).abs());
            }
        }
    }
    verdict(
        worst <= 1e-6,
        format!(
            "{vectors} encoded vectors over 1000 sessions, worst |P-1| = {worst:.1e} \
             ({passthrough} improved-channel segments pass the original encoding through)"
        ),
    )
}

fn protocol_provenance() -> Outcome {
    let models = probe_models()?;
    let images = dataset::synthetic(20, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut re_encodes = 0;
    for session in 0..200 {
        let model = &models[session % models.len()];
        let m = model.blocks();
        let image = &images.images()[session % images.len()];
        let schedule = random_schedule(&mut rng, m)?;
        let mut tx = Transmitter::start(model, image, *schedule.initial_state())?;
        let originals = latent::complex_to_block_view(tx.original_blocks()?.symbols(), m, DType::F64, &Device::Cpu)?;
        let mut rx = Receiver::new();
        let mut expected_received = Vec::new();
        for (j, seg) in schedule.segments().iter().enumerate() {
            if j > 0 {
                tx.on_csi_change(seg.state)?;
                let p = tx.next_block() - 1;
                let source = originals.narrow(2, p, m - p)?;
                let expected = model.dynamic_encoder.forward(&source, &[tx.initial_csi()], &[tx.current_csi()], m)?;
                let got = latent::complex_to_block_view(tx.current_encoding()?.symbols(), m - p, DType::F64, &Device::Cpu)?;
                if values(&expected)? != values(&got)? {
                    return verdict(false, format!("session {session}: re-encode at block {} did not read the originals", p + 1));
                }
                re_encodes += 1;
            }
            rx.open_segment(seg.state);
            for _ in 0..seg.blocks {
                let clean = tx.current_encoding()?.block(1).ok_or("no block to send")?.to_vec();
                let mut replay = rng.clone();
                let expected = channel::equalize(&channel::transmit(&clean, &seg.state, &mut replay), &seg.state)?;
                let received = tx.transmit_next_block(&mut rng)?;
                if received != expected {
                    return verdict(false, format!("session {session}: block {} is not the head of the current encoding", rx.received() + 1));
                }
                expected_received.push(expected);
                rx.receive(received)?;
            }
        }
        let reads_originals = tx.trace().iter().all(|e| match e {
            TraceEvent::ReEncode { input_digest, originals_digest, .. } => input_digest == originals_digest,
            _ => true,
        });
        let sent = tx.trace().iter().filter(|e| matches!(e, TraceEvent::Block { .. })).count();
        let extra = tx.transmit_next_block(&mut rng).is_err();
        if !reads_originals || sent != m || rx.received() != m || !extra {
            return verdict(false, format!("session {session}: {sent} blocks sent, {} received", rx.received()));
        }
        let bounds: Vec<(usize, usize)> = rx.segments().iter().map(|s| (s.first, s.last)).collect();
        let concatenated: Vec<Vec<Complex64>> = rx.segments().iter().flat_map(|s| s.blocks.clone()).collect();
        if bounds != schedule.boundaries() || concatenated != expected_received {
            return verdict(false, format!("session {session}: segment order {bounds:?}"));
        }
    }
    verdict(true, format!("200 sessions, {re_encodes} re-encodes read the originals, m blocks each, order preserved"))
}

fn channel_statistics() -> Outcome {
    const N: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut notes = Vec::new();
    let mut pass = true;
    for snr_db in [0.0, 10.0, 19.0] {
        let state = ChannelState::awgn_db(snr_db)?;
        let y = channel::transmit(&vec![Complex64::new(0.0, 0.0); N], &state, &mut rng);
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / N as f64;
        let rel = (var / state.sigma2() - 1.0).abs();
        pass &= rel < 0.05;
        notes.push(format!("noise {snr_db} dB {:.2}%", 100.0 * rel));
    }
    let gains: Vec<Complex64> = (0..N)
        .map(|_| channel::sample_rayleigh_state(&mut rng, 0.1).map(|s| s.gain()))
        .collect::<Result<_, _>>()?;
    let power = gains.iter().map(|h| h.norm_sqr()).sum::<f64>() / N as f64;
    pass &= (power - 1.0).abs() < 0.02;
    notes.push(format!("E|h|^2 {power:.4}"));
    let mut phases: Vec<f64> = gains.iter().map(|h| (h.arg() + PI) / (2.0 * PI)).collect();
    phases.sort_by(f64::total_cmp);
    let ks = phases
        .iter()
        .enumerate()
        .map(|(i, c)| (c - i as f64 / N as f64).abs().max(((i + 1) as f64 / N as f64 - c).abs()))
        .fold(0.0, f64::max);
    pass &= ks < 1.63 / (N as f64).sqrt();
    notes.push(format!("phase KS {ks:.4}"));
    let z: Vec<Complex64> = (0..1000).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
    let mut identity: f64 = 0.0;
    for _ in 0..100 {
        let state = channel::sample_rayleigh_state(&mut rng, 1.0)?;
        let back = channel::equalize(&channel::transmit_noiseless(&z, &state), &state)?;
        identity = identity.max(z.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    pass &= identity < 1e-6;
    notes.push(format!("noiseless round trip {identity:.1e}"));
    verdict(pass, notes.join(", "))
}

struct Corpus {
    source: DataConfig,
    label: &'static str,
    train: Dataset,
    test: Dataset,
}

fn corpus() -> Result<&'static Corpus, Box<dyn StdError>> {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    if let Some(c) = CORPUS.get() {
        return Ok(c);
    }
    let (source, label) = if dataset::data_root_from_env().is_some() {
        (DataConfig::Cifar10 { root: None }, "CIFAR-10")
    } else {
        (DataConfig::Synthetic { train: 5000, test: 1024, seed: 1 }, "synthetic images")
    };
    let corpus = Corpus {
        train: source.load(Split::Train)?,
        test: source.load(Split::Test)?,
        source,
        label,
    };
    Ok(CORPUS.get_or_init(|| corpus))
}

fn cache_dir() -> PathBuf {
    std::env::var_os("DRJSCC_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance"))
}

struct Trained {
    model: Drjscc,
    tag: ModelTag,
    initial_loss: f64,
    final_loss: f64,
    cached: bool,
}

/// Desk-scale training of `variant` at ratio `1/denominator` over `m` blocks.
fn trained(denominator: usize, m: usize, variant: Variant) -> Result<&'static Trained, Box<dyn StdError>> {
    static MODELS: OnceLock<Mutex<HashMap<String, &'static Trained>>> = OnceLock::new();
    let data = corpus()?;
    let model_config = ModelConfig::desk([1, denominator], m)?;
    let train_config = TrainConfig { seed: SEED, ..TrainConfig::desk(variant) };
    let key = config_hash(&(&model_config, &train_config, &data.source))?;
    let models = MODELS.get_or_init(Default::default);
    if let Some(t) = models.lock().map_err(|e| e.to_string())?.get(&key) {
        return Ok(t);
    }
    let dir = cache_dir().join(&key);
    let final_path = dir.join("final.safetensors");
    let fresh = Trainer::new(Drjscc::new(model_config, SEED, DType::F32, &Device::Cpu)?, train_config.clone())?;
    let initial_loss = fresh.probe_loss(&data.train)?;
    let cached = final_path.is_file();
    if !cached {
        fs::create_dir_all(&dir)?;
        let log = dir.join("train_log.jsonl");
        if log.exists() {
            fs::remove_file(&log)?;
        }
        let mut trainer = fresh.with_log(log).with_checkpoints(&dir);
        trainer.fit(&data.train)?;
    }
    let loaded = checkpoint::load(&final_path, &Device::Cpu)?;
    let tag = ModelTag::from_meta(&loaded.meta);
    let trainer = Trainer::resume(loaded, train_config)?;
    let final_loss = trainer.probe_loss(&data.train)?;
    let t: &'static Trained = Box::leak(Box::new(Trained {
        model: trainer.into_model(),
        tag,
        initial_loss,
        final_loss,
        cached,
    }));
    models.lock().map_err(|e| e.to_string())?.insert(key, t);
    Ok(t)
}

fn mean_psnr(t: &Trained, spec: &ScenarioSpec) -> Result<f64, Box<dyn StdError>> {
    Ok(run_scenario(spec, &t.model, &t.tag, &corpus()?.test, EVAL_SEED)?.mean_psnr_db)
}

fn provenance(t: &Trained) -> &'static str {
    if t.cached {
        "cached"
    } else {
        "trained"
    }
}

fn training_smoke_test() -> Outcome {
    let t = trained(12, 8, Variant::Drjscc)?;
    let drop = 1.0 - t.final_loss / t.initial_loss;
    let high = mean_psnr(t, &suites::awgn(&[19.0], &[8], 512))?;
    let low = mean_psnr(t, &suites::awgn(&[1.0], &[8], 512))?;
    verdict(
        drop >= 0.30 && high > low,
        format!(
            "{} on {}: loss {:.5} -> {:.5} ({:.1}% drop); PSNR {high:.2} dB at 19 dB vs {low:.2} dB at 1 dB",
            provenance(t),
            corpus()?.label,
            t.initial_loss,
            t.final_loss,
            100.0 * drop
        ),
    )
}

fn refinement_benefit() -> Outcome {
    let dr = trained(12, 8, Variant::Drjscc)?;
    let st = trained(12, 8, Variant::StaticOnly)?;
    let late = suites::awgn(&[19.0, 1.0], &[2, 6], 512);
    let early = suites::awgn(&[19.0, 1.0], &[6, 2], 512);
    let (dr_late, st_late) = (mean_psnr(dr, &late)?, mean_psnr(st, &late)?);
    let (dr_early, st_early) = (mean_psnr(dr, &early)?, mean_psnr(st, &early)?);
    let (gap_late, gap_early) = (dr_late - st_late, dr_early - st_early);
    verdict(
        dr_late > st_late && gap_late >= gap_early,
        format!(
            "SNR=(19,1) drjscc vs static-only: C=(2,6) {dr_late:.2} vs {st_late:.2} dB (gap {gap_late:+.2}); \
             C=(6,2) {dr_early:.2} vs {st_early:.2} dB (gap {gap_early:+.2})"
        ),
    )
}

/// Refined blocks sent through a noiseless channel decode better with the
/// dynamic decoder than with it removed.
fn dynamic_decoder_composition() -> Outcome {
    let t = trained(12, 8, Variant::Drjscc)?;
    let model = &t.model;
    let m = model.blocks();
    let (initial, changed) = (ChannelState::awgn_db(19.0)?, ChannelState::awgn_db(1.0)?);
    let (mut with, mut without) = (0.0, 0.0);
    let images = &corpus()?.test.images()[..256];
    for image in images {
        let mut tx = Transmitter::start(model, image, initial)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut blocks = Vec::new();
        for p in 0..m {
            if p == 2 {
                tx.on_csi_change(changed)?;
            }
            blocks.push(tx.current_encoding()?.block(1).ok_or("no block to send")?.to_vec());
            tx.transmit_next_block(&mut rng)?;
        }
        let segment = |first: usize, last: usize, state: ChannelState| SegmentRecord {
            first,
            last,
            state,
            csi: Csi::from_state(&state),
            blocks: blocks[first - 1..last].to_vec(),
        };
        let segments = [segment(1, 2, initial), segment(3, m, changed)];
        let mse = |x_hat: &ImageTensor| {
            image.pixels().iter().zip(x_hat.pixels()).map(|(a, b)| f64::from(a - b).powi(2)).sum::<f64>()
                / image.len() as f64
        };
        with += mse(&receiver_finalize(&segments, tx.initial_csi(), model)?);
        without += mse(&receiver_finalize_static(&segments, tx.initial_csi(), model)?);
    }
    let n = images.len() as f64;
    verdict(
        with < without,
        format!(
            "SNR=(19,1),C=(2,6) noiseless, {} images: MSE {:.5} with dynamic decoding vs {:.5} without",
            images.len(),
            with / n,
            without / n
        ),
    )
}

fn rayleigh_robustness() -> Outcome {
    let dr = trained(6, 16, Variant::Drjscc)?;
    let st = trained(6, 16, Variant::StaticOnly)?;
    let mut means = HashMap::new();
    for (name, t) in [("drjscc", dr), ("static-only", st)] {
        for coherence in suites::FIG7_COHERENCE {
            let mut total = 0.0;
            for i in 0..suites::FIG7_SCENARIOS {
                total += mean_psnr(t, &suites::fig7_scenario(i, coherence, 128))?;
            }
            means.insert((name, coherence), total / suites::FIG7_SCENARIOS as f64);
        }
    }
    let degradation = |name| means[&(name, 4)] - means[&(name, 1)];
    let (dr_deg, st_deg) = (degradation("drjscc"), degradation("static-only"));
    verdict(
        dr_deg < st_deg,
        format!(
            "coherence 4 -> 1: drjscc {:.2} -> {:.2} dB ({dr_deg:+.2}), static-only {:.2} -> {:.2} dB ({st_deg:+.2})",
            means[&("drjscc", 4)],
            means[&("drjscc", 1)],
            means[&("static-only", 4)],
            means[&("static-only", 1)]
        ),
    )
}

fn psnr_metric() -> Outcome {
    let mut checks = vec![
        ("MSE = MAX^2 gives 0 dB", psnr_from_mse(1.0, 1.0) == 0.0 && psnr_from_mse(255.0 * 255.0, 255.0) == 0.0),
        ("MSE 0.01 at MAX 1 gives 20 dB", psnr_from_mse(0.01, 1.0) == 20.0),
        ("identical images give +inf", psnr_with_max(&[0.2, 0.4], &[0.2, 0.4], 1.0)? == f64::INFINITY),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x: Vec<f64> = (0..3072).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| (v + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)).collect();
        let unit = psnr_with_max(&x, &y, 1.0)?;
        let scaled = psnr_with_max(
            &x.iter().map(|v| v * 255.0).collect::<Vec<_>>(),
            &y.iter().map(|v| v * 255.0).collect::<Vec<_>>(),
            255.0,
        )?;
        worst = worst.max((unit - scaled).abs());
    }
    checks.push(("MAX 1 and MAX 255 agree within 1e-9", worst < 1e-9));
    let image = ImageTensor::new(1, 1, 2, vec![0.0, 1.0])?;
    let noisy = ImageTensor::new(1, 1, 2, vec![0.25, 0.75])?;
    checks.push(("image PSNR of a 0.25 error is 10 log10 16", evaluation::psnr(&image, &noisy)? == 10.0 * 16f64.log10()));
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        verdict(true, format!("{} reference checks exact, scale consistency {worst:.1e}", checks.len()))
    } else {
        verdict(false, format!("failed: {}", failed.join("; ")))
    }
}

fn drjscc_cli(args: &[&str]) -> Result<(), Box<dyn StdError>> {
    let out = Command::new(env!("CARGO_BIN_EXE_drjscc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove(DATA_ROOT_ENV)
        .output()?;
    if !out.status.success() {
        return Err(format!("drjscc {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)).into());
    }
    Ok(())
}

fn losses(log: &Path) -> Result<Vec<(u64, u64)>, Box<dyn StdError>> {
    fs::read_to_string(log)?
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l)?;
            Ok((v["step"].as_u64().unwrap_or_default(), v["loss"].as_f64().unwrap_or(f64::NAN).to_bits()))
        })
        .collect()
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir()?;
    let run_dir = |i: usize| dir.path().join(format!("run{i}"));
    let config = |i: usize| -> Result<PathBuf, Box<dyn StdError>> {
        let cfg = RunConfig {
            seed: Some(8),
            model: ModelConfig::cifar([1, 12], 8, (4, 8))?,
            train: TrainConfig { epochs: 2, batch_size: 8, learning_rate: 1e-3, ..TrainConfig::default() },
            data: DataConfig::Synthetic { train: 24, test: 8, seed: 3 },
            evaluate: Default::default(),
            paths: PathsConfig {
                checkpoints: run_dir(i).join("checkpoints"),
                results: run_dir(i).join("results"),
                log: run_dir(i).join("train_log.jsonl"),
            },
        };
        let path = dir.path().join(format!("run{i}.toml"));
        fs::write(&path, cfg.to_toml()?)?;
        Ok(path)
    };
    let mut identical = Vec::new();
    for i in 0..2 {
        let cfg = config(i)?;
        let cfg = cfg.to_str().ok_or("path")?;
        let ck = run_dir(i).join("checkpoints/final.safetensors");
        let ck = ck.to_str().ok_or("path")?;
        drjscc_cli(&["--config", cfg, "train"])?;
        for j in 0..2 {
            let out = run_dir(i).join(format!("eval{j}"));
            drjscc_cli(&["--config", cfg, "evaluate", "--suite", "fig6", "--images", "3", "--out", out.to_str().ok_or("path")?])?;
            let sim = run_dir(i).join(format!("sim{j}"));
            drjscc_cli(&["--config", cfg, "simulate", "--checkpoint", ck, "--index", "1", "--schedule", "SNR=(19,1,19),C=(2,3,3)", "--out", sim.to_str().ok_or("path")?])?;
        }
    }
    let same = |a: &Path, b: &Path| -> Result<bool, Box<dyn StdError>> { Ok(fs::read(a)? == fs::read(b)?) };
    let (a, b) = (run_dir(0), run_dir(1));
    identical.push(("training loss curve", losses(&a.join("train_log.jsonl"))? == losses(&b.join("train_log.jsonl"))?));
    identical.push(("checkpoint", same(&a.join("checkpoints/final.safetensors"), &b.join("checkpoints/final.safetensors"))?));
    for (label, file) in [("results table", "results.csv"), ("per-image PSNR", "per_image.json")] {
        let all = [a.join("eval0"), a.join("eval1"), b.join("eval0"), b.join("eval1")];
        let ok = all.iter().skip(1).map(|d| same(&all[0].join(file), &d.join(file))).collect::<Result<Vec<_>, _>>()?;
        identical.push((label, ok.into_iter().all(|x| x)));
    }
    for (label, file) in [("simulation trace", "trace.json"), ("reconstruction", "reconstruction.png")] {
        let all = [a.join("sim0"), a.join("sim1"), b.join("sim0"), b.join("sim1")];
        let ok = all.iter().skip(1).map(|d| same(&all[0].join(file), &d.join(file))).collect::<Result<Vec<_>, _>>()?;
        identical.push((label, ok.into_iter().all(|x| x)));
    }
    let differing: Vec<&str> = identical.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if differing.is_empty() {
        verdict(true, format!("two independent train/evaluate/simulate runs agree bit-exactly on {} artifacts", identical.len()))
    } else {
        verdict(false, format!("differs: {}", differing.join(", ")))
    }
}
