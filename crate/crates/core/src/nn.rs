//! Shared network pieces: the attention-feature (AF) module, CSI encoding,
//! and seeded parameter initialization.

use candle_core::{DType, Device, Tensor, Var, D};
use candle_nn::{linear, Linear, Module, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::Csi;
use crate::Result;

/// Linear map of a CSI dB value onto the unit interval over `range_db`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiScale {
    pub low_db: f64,
    pub high_db: f64,
}

impl CsiScale {
    pub fn feature(&self, csi: &Csi) -> f64 {
        (csi.snr_db - self.low_db) / (self.high_db - self.low_db)
    }

    /// `(B, 1)` column of scaled CSI features.
    pub fn column(&self, csi: &[Csi], dtype: DType, device: &Device) -> Result<Tensor> {
        let v: Vec<f64> = csi.iter().map(|c| self.feature(c)).collect();
        Ok(Tensor::from_vec(v, (csi.len(), 1), device)?.to_dtype(dtype)?)
    }
}

/// Channel-wise scaling conditioned on CSI.
///
/// The feature map is average-pooled to one value per channel, the CSI
/// feature is appended, and two fully connected layers with a sigmoid yield a
/// per-channel factor in (0, 1).
#[derive(Debug, Clone)]
pub struct AfModule {
    squeeze: Linear,
    excite: Linear,
}

impl AfModule {
    pub fn new(channels: usize, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            squeeze: linear(channels + 1, hidden, vb.pp("fc1"))?,
            excite: linear(hidden, channels, vb.pp("fc2"))?,
        })
    }

    /// Per-channel scales `(B, C)` for features of shape `(B, C, ...)`.
    pub fn scales(&self, features: &Tensor, csi: &Tensor) -> Result<Tensor> {
        let pooled = features.flatten_from(2)?.mean(D::Minus1)?;
        let context = Tensor::cat(&[&pooled, csi], 1)?;
        let hidden = self.squeeze.forward(&context)?.relu()?;
        Ok(candle_nn::ops::sigmoid(&self.excite.forward(&hidden)?)?)
    }

    pub fn forward(&self, features: &Tensor, csi: &Tensor) -> Result<Tensor> {
        let scales = self.scales(features, csi)?;
        let mut shape = scales.dims().to_vec();
        shape.resize(features.rank(), 1);
        Ok(features.broadcast_mul(&scales.reshape(shape)?)?)
    }
}

/// Overwrites every variable in `varmap` with seeded values.
///
/// Weights (rank >= 2) are drawn uniformly with He bounds computed from
/// `shape[1] * prod(shape[2..])`; biases are zeroed and PReLU slopes reset to
/// 0.25. Variables are visited in name order so the draw is reproducible.
pub fn init_parameters(varmap: &VarMap, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, var) in sorted_vars(varmap) {
        let dims = var.dims().to_vec();
        let n = var.elem_count();
        let values: Vec<f64> = if name.ends_with("prelu.weight") {
            vec![0.25; n]
        } else if dims.len() < 2 || name.ends_with("bias") {
            vec![0.0; n]
        } else {
            let fan_in: usize = dims[1..].iter().product();
            let bound = (6.0 / (1.0625 * fan_in as f64)).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let t = Tensor::from_vec(values, dims, var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
    }
    Ok(())
}

/// All variables sorted by name.
pub fn sorted_vars(varmap: &VarMap) -> Vec<(String, Var)> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut vars: Vec<(String, Var)> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

/// Variables whose name starts with `prefix`.
pub fn vars_with_prefix(varmap: &VarMap, prefix: &str) -> Vec<(String, Var)> {
    sorted_vars(varmap)
        .into_iter()
        .filter(|(name, _)| name.starts_with(prefix))
        .collect()
}
