//! Checkpoint container: a safetensors file whose header metadata carries a
//! JSON [`CheckpointMeta`] under the key `drjscc`.
//!
//! Tensor names are `model/<parameter>`, `adam_m/<parameter>` and
//! `adam_v/<parameter>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::TrainConfig;
use crate::model::{Drjscc, ModelConfig, Variant};
use crate::nn::sorted_vars;
use crate::{Error, Result};

pub const FORMAT: &str = "drjscc-checkpoint/1";
const META_KEY: &str = "drjscc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub model: ModelConfig,
    pub variant: Variant,
    pub train: Option<TrainConfig>,
    /// Hash of the resolved model + training configuration.
    pub config_hash: String,
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub seed: u64,
}

impl CheckpointMeta {
    /// Short identifier: config hash plus epoch.
    pub fn id(&self) -> String {
        format!("{}-e{}", &self.config_hash[..self.config_hash.len().min(12)], self.epoch)
    }
}

fn tensor_bytes(t: &Tensor) -> Result<(Dtype, Vec<usize>, Vec<u8>)> {
    let shape = t.dims().to_vec();
    let flat = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F64 => (Dtype::F64, shape, flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect()),
        _ => (
            Dtype::F32,
            shape,
            flat.to_dtype(DType::F32)?.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        ),
    })
}

fn view_tensor(view: &TensorView<'_>, device: &Device) -> Result<Tensor> {
    let data = view.data();
    let shape = view.shape().to_vec();
    Ok(match view.dtype() {
        Dtype::F64 => {
            let v: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            Tensor::from_vec(v, shape, device)?
        }
        Dtype::F32 => {
            let v: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            Tensor::from_vec(v, shape, device)?
        }
        other => return Err(Error::Checkpoint(format!("unsupported tensor dtype {other:?}"))),
    })
}

/// Writes model parameters, optional optimizer moments and metadata.
pub fn save(path: &Path, model: &Drjscc, optimizer: Option<&AdamW>, meta: &CheckpointMeta) -> Result<()> {
    let mut owned: Vec<(String, Dtype, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, var) in sorted_vars(model.varmap()) {
        let (dt, shape, bytes) = tensor_bytes(var.as_tensor())?;
        owned.push((format!("model/{name}"), dt, shape, bytes));
    }
    if let Some(opt) = optimizer {
        for (name, first, second) in opt.moments() {
            let (dt, shape, bytes) = tensor_bytes(first)?;
            owned.push((format!("adam_m/{name}"), dt, shape, bytes));
            let (dt, shape, bytes) = tensor_bytes(second)?;
            owned.push((format!("adam_v/{name}"), dt, shape, bytes));
        }
    }
    let views = owned
        .iter()
        .map(|(n, dt, shape, bytes)| {
            TensorView::new(*dt, shape.clone(), bytes)
                .map(|v| (n.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut info = HashMap::new();
    info.insert(META_KEY.to_string(), serde_json::to_string(meta)?);
    let bytes = safetensors::serialize(views, Some(info)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A checkpoint read back from disk.
#[derive(Debug)]
pub struct Loaded {
    pub meta: CheckpointMeta,
    pub model: Drjscc,
    pub(crate) moments: HashMap<String, (Tensor, Tensor)>,
}

impl Loaded {
    /// Copies stored optimizer moments into `optimizer`.
    pub fn restore_optimizer(&self, optimizer: &mut AdamW) -> Result<()> {
        optimizer.restore(self.meta.step, |name| self.moments.get(name).cloned())
    }

    pub fn has_optimizer_state(&self) -> bool {
        !self.moments.is_empty()
    }
}

pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    meta_from_bytes(&bytes)
}

fn meta_from_bytes(bytes: &[u8]) -> Result<CheckpointMeta> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let json = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| Error::Checkpoint(format!("missing `{META_KEY}` metadata")))?;
    let meta: CheckpointMeta = serde_json::from_str(json)?;
    if meta.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown checkpoint format {:?}", meta.format)));
    }
    Ok(meta)
}

/// Rebuilds the model stored at `path`.
pub fn load(path: &Path, device: &Device) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = meta_from_bytes(&bytes)?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let dtype = match st.tensors().first().map(|(_, v)| v.dtype()) {
        Some(Dtype::F64) => DType::F64,
        _ => DType::F32,
    };
    let model = Drjscc::new(meta.model.clone(), meta.seed, dtype, device)?;
    for (name, var) in sorted_vars(model.varmap()) {
        let view = st
            .tensor(&format!("model/{name}"))
            .map_err(|_| Error::Checkpoint(format!("checkpoint lacks parameter {name}")))?;
        let t = view_tensor(&view, device)?;
        if t.dims() != var.dims() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: stored shape {:?}, model shape {:?}",
                t.dims(),
                var.dims()
            )));
        }
        var.set(&t.to_dtype(dtype)?)?;
    }
    let mut moments = HashMap::new();
    for (name, view) in st.tensors() {
        if let Some(param) = name.strip_prefix("adam_m/") {
            let second = st
                .tensor(&format!("adam_v/{param}"))
                .map_err(|_| Error::Checkpoint(format!("checkpoint lacks second moment of {param}")))?;
            moments.insert(param.to_string(), (view_tensor(&view, device)?, view_tensor(&second, device)?));
        }
    }
    Ok(Loaded { meta, model, moments })
}
