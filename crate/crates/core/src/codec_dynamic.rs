//! The re-coding (RC) module and its mirrored dynamic decoder.
//!
//! For `c_n` remaining blocks out of `m`, with features `F` of shape
//! `(B, d, c_n)` (one column per block):
//!
//! ```text
//! λ  = 0                      if the channel did not get worse
//!    = σ(FC(ReLU(FC(csi₀, csiₙ, c_n/m))))   otherwise
//! U  = λ·F,   Ũ = (1-λ)·F
//! Û  = U·M               (c_n → m columns, banded M)
//! V  = S(Û, csiₙ)         (stride-1 conv/AF stack)
//! Ṽ  = V·Mᵀ              (m → c_n columns)
//! Fᴬ = Ṽ + Ũ
//! ```
//!
//! Items whose gate is zero bypass the module entirely and come back
//! bit-identical. The encoder-side module power-normalizes `Fᴬ`; the decoder
//! side does not.

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{conv1d, linear, prelu, Conv1d, Conv1dConfig, Linear, PReLU, VarBuilder};

use crate::channel::Csi;
use crate::latent::power_normalize_rows;
use crate::nn::{AfModule, CsiScale};
use crate::{Error, Result};

/// The `c_n × m` banded dispersing matrix.
///
/// Row `i` holds `K = m - c_n + 1` copies of `w = 1/K` in columns
/// `i..i+K`, zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DisperseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DisperseMatrix {
    pub fn new(remaining: usize, total: usize) -> Result<Self> {
        if remaining == 0 || remaining > total {
            return Err(Error::Config(format!(
                "remaining block count {remaining} must lie in 1..={total}"
            )));
        }
        let kernel = total - remaining + 1;
        let w = 1.0 / kernel as f64;
        let mut entries = vec![0.0; remaining * total];
        for i in 0..remaining {
            entries[i * total + i..i * total + i + kernel].fill(w);
        }
        Ok(Self {
            rows: remaining,
            cols: total,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Band width `K`.
    pub fn kernel(&self) -> usize {
        self.cols - self.rows + 1
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.kernel() as f64
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_slice(&self.entries, (self.rows, self.cols), device)?.to_dtype(dtype)?)
    }
}

fn check_width(t: &Tensor, expected: usize, what: &str) -> Result<()> {
    let last = *t
        .dims()
        .last()
        .ok_or_else(|| Error::Shape(format!("{what}: scalar input")))?;
    if last != expected || t.rank() < 2 {
        return Err(Error::Shape(format!(
            "{what}: expected {expected} block columns, got shape {:?}",
            t.dims()
        )));
    }
    Ok(())
}

/// `Û = U·M`, `(…, d, c_n) → (…, d, m)`.
pub fn disperse(u: &Tensor, matrix: &DisperseMatrix) -> Result<Tensor> {
    check_width(u, matrix.rows, "disperse")?;
    let m = matrix.to_tensor(u.dtype(), u.device())?;
    Ok(u.broadcast_matmul(&m)?)
}

/// `Ṽ = V·Mᵀ`, `(…, d, m) → (…, d, c_n)`.
pub fn aggregate(v: &Tensor, matrix: &DisperseMatrix) -> Result<Tensor> {
    check_width(v, matrix.cols, "aggregate")?;
    let mt = matrix.to_tensor(v.dtype(), v.device())?.t()?;
    Ok(v.broadcast_matmul(&mt)?)
}

/// The two-layer refinement-intensity network.
#[derive(Debug, Clone)]
pub struct LambdaNet {
    fc1: Linear,
    fc2: Linear,
}

impl LambdaNet {
    pub fn new(hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            fc1: linear(3, hidden, vb.pp("fc1"))?,
            fc2: linear(hidden, 1, vb.pp("fc2"))?,
        })
    }

    /// `(B, 1)` values in (0, 1) from `(B, 3)` inputs.
    pub fn forward(&self, inputs: &Tensor) -> Result<Tensor> {
        let h = self.fc1.forward(inputs)?.relu()?;
        Ok(candle_nn::ops::sigmoid(&self.fc2.forward(&h)?)?)
    }
}

#[derive(Debug, Clone)]
struct ReconStage {
    conv: Conv1d,
    act: PReLU,
    af: AfModule,
}

/// Non-compressing conv/AF stack over the block axis, conditioned on `csiₙ`.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    stages: Vec<ReconStage>,
    head: Conv1d,
}

impl Reconstruction {
    pub fn new(width: usize, kernel: usize, layers: usize, af_hidden: usize, vb: VarBuilder) -> Result<Self> {
        if layers == 0 || kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "reconstruction needs >= 1 layer and an odd kernel, got {layers} layers, kernel {kernel}"
            )));
        }
        let cfg = Conv1dConfig {
            padding: kernel / 2,
            ..Default::default()
        };
        let stages = (0..layers - 1)
            .map(|i| {
                let vb = vb.pp(format!("stage{i}"));
                Ok(ReconStage {
                    conv: conv1d(width, width, kernel, cfg, vb.pp("conv"))?,
                    act: prelu(Some(width), vb.pp("prelu"))?,
                    af: AfModule::new(width, af_hidden, vb.pp("af"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = conv1d(width, width, kernel, cfg, vb.pp("head"))?;
        Ok(Self { stages, head })
    }

    pub fn forward(&self, u_hat: &Tensor, csi: &Tensor) -> Result<Tensor> {
        let mut x = u_hat.clone();
        for stage in &self.stages {
            x = stage.conv.forward(&x)?;
            x = stage.act.forward(&x)?;
            x = stage.af.forward(&x, csi)?;
        }
        Ok(self.head.forward(&x)?)
    }
}

/// Shape of an RC module.
#[derive(Debug, Clone, Copy)]
pub struct RcShape {
    /// Reals per block, `d = 2k/m`.
    pub block_width: usize,
    pub kernel: usize,
    pub layers: usize,
    pub af_hidden: usize,
    pub lambda_hidden: usize,
}

/// The RC module. With `power = Some(P)` it is the dynamic encoder `g_ζ`;
/// with `None` it is the dynamic decoder `G_ψ`.
#[derive(Debug, Clone)]
pub struct RcModule {
    lambda: LambdaNet,
    recon: Reconstruction,
    scale: CsiScale,
    power: Option<f64>,
}

impl RcModule {
    pub fn new(shape: RcShape, scale: CsiScale, power: Option<f64>, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            lambda: LambdaNet::new(shape.lambda_hidden, vb.pp("lambda"))?,
            recon: Reconstruction::new(
                shape.block_width,
                shape.kernel,
                shape.layers,
                shape.af_hidden,
                vb.pp("recon"),
            )?,
            scale,
            power,
        })
    }

    /// Per-item λ as a `(B, 1)` tensor; exactly zero where the channel did
    /// not get worse.
    pub fn lambda_gate(
        &self,
        initial: &[Csi],
        current: &[Csi],
        remaining: usize,
        total: usize,
        dtype: DType,
        device: &Device,
    ) -> Result<Tensor> {
        let b = initial.len();
        if current.len() != b {
            return Err(Error::Shape(format!("{b} initial CSI values but {} current", current.len())));
        }
        let frac = remaining as f64 / total as f64;
        let inputs: Vec<f64> = initial
            .iter()
            .zip(current)
            .flat_map(|(c0, cn)| [self.scale.feature(c0), self.scale.feature(cn), frac])
            .collect();
        let inputs = Tensor::from_vec(inputs, (b, 3), device)?.to_dtype(dtype)?;
        let lambda = self.lambda.forward(&inputs)?;
        let keep = gate_mask(initial, current, device)?;
        Ok(keep.where_cond(&lambda.zeros_like()?, &lambda)?)
    }

    /// Refines `(B, d, c_n)` features for the current channel.
    pub fn forward(&self, features: &Tensor, initial: &[Csi], current: &[Csi], total: usize) -> Result<Tensor> {
        let (b, d, remaining) = features.dims3()?;
        if initial.len() != b || current.len() != b {
            return Err(Error::Shape(format!(
                "{b} items but {} / {} CSI values",
                initial.len(),
                current.len()
            )));
        }
        let matrix = DisperseMatrix::new(remaining, total)?;
        let bypass: Vec<bool> = initial.iter().zip(current).map(|(c0, cn)| cn.no_worse_than(c0)).collect();
        if bypass.iter().all(|&x| x) {
            return Ok(features.clone());
        }
        let (dtype, dev) = (features.dtype(), features.device());
        let lambda = self
            .lambda_gate(initial, current, remaining, total, dtype, dev)?
            .reshape((b, 1, 1))?;
        let u = features.broadcast_mul(&lambda)?;
        let u_tilde = features.broadcast_mul(&lambda.affine(-1.0, 1.0)?)?;
        let u_hat = disperse(&u, &matrix)?;
        let v = self.recon.forward(&u_hat, &self.scale.column(current, dtype, dev)?)?;
        let mut refined = (aggregate(&v, &matrix)? + u_tilde)?;
        if let Some(power) = self.power {
            refined = power_normalize_rows(&refined.reshape((b, d * remaining))?, power)?
                .reshape((b, d, remaining))?;
        }
        if bypass.iter().any(|&x| x) {
            let keep = gate_mask(initial, current, dev)?
                .reshape((b, 1, 1))?
                .broadcast_as((b, d, remaining))?;
            refined = keep.where_cond(features, &refined)?;
        }
        Ok(refined)
    }
}

/// `(B, 1)` u8 mask, 1 where the item bypasses refinement.
fn gate_mask(initial: &[Csi], current: &[Csi], device: &Device) -> Result<Tensor> {
    let mask: Vec<u8> = initial
        .iter()
        .zip(current)
        .map(|(c0, cn)| u8::from(cn.no_worse_than(c0)))
        .collect();
    Ok(Tensor::from_vec(mask, (initial.len(), 1), device)?)
}
