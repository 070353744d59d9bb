//! Channel-symbol layout: images, bandwidth, block partitioning and power.
//!
//! The encoder's flattened feature map of `2k` reals becomes `k` complex
//! symbols by pairwise interleaving (`re = f[2j]`, `im = f[2j+1]`). Blocks are
//! contiguous runs of `k/m` symbols, so in the real view one block is `d = 2k/m`
//! consecutive reals.

use candle_core::{DType, Device, Tensor, D};
use num_complex::Complex64;

use crate::{Error, Result};

/// A `(C, H, W)` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} pixels for a {channels}x{height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Shape(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            channels,
            height,
            width,
            pixels,
        })
    }

    /// Builds an image from 8-bit channel-major pixels.
    pub fn from_u8(channels: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let pixels = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(channels, height, width, pixels)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Total element count `l = C·H·W`.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// `(1, C, H, W)` tensor.
    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_slice(
            &self.pixels,
            (1, self.channels, self.height, self.width),
            device,
        )?
        .to_dtype(dtype)?)
    }

    /// Reads item `index` of a `(B, C, H, W)` tensor, clamping to `[0, 1]`.
    pub fn from_tensor(batch: &Tensor, index: usize) -> Result<Self> {
        let (_, c, h, w) = batch.dims4()?;
        let pixels = batch
            .get(index)?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect();
        Self::new(c, h, w, pixels)
    }
}

/// Stacks images into one `(B, C, H, W)` tensor.
pub fn stack_images(images: &[&ImageTensor], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (c, h, w) = first.shape();
    let mut flat = Vec::with_capacity(images.len() * first.len());
    for img in images {
        if img.shape() != (c, h, w) {
            return Err(Error::Shape("images in a batch differ in shape".into()));
        }
        flat.extend_from_slice(img.pixels());
    }
    Ok(Tensor::from_vec(flat, (images.len(), c, h, w), device)?.to_dtype(dtype)?)
}

/// Channel bandwidth ratio `R = k / l`, kept as exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthConfig {
    pub source_len: usize,
    pub symbols: usize,
}

impl BandwidthConfig {
    /// `R = numerator / denominator`; `l·R` must be an integer.
    pub fn from_ratio(source_len: usize, numerator: usize, denominator: usize) -> Result<Self> {
        if denominator == 0 || (source_len * numerator) % denominator != 0 {
            return Err(Error::Config(format!(
                "R = {numerator}/{denominator} does not give an integer symbol count for l = {source_len}"
            )));
        }
        Ok(Self {
            source_len,
            symbols: source_len * numerator / denominator,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.symbols as f64 / self.source_len as f64
    }
}

/// `k` complex channel symbols split into `m` equal contiguous blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlocks {
    symbols: Vec<Complex64>,
    blocks: usize,
}

impl SymbolBlocks {
    pub fn new(symbols: Vec<Complex64>, blocks: usize) -> Result<Self> {
        check_divisible(symbols.len(), blocks)?;
        Ok(Self { symbols, blocks })
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<Complex64> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.symbols.len() / self.blocks
    }

    /// Block `i`, 1-indexed.
    pub fn block(&self, i: usize) -> Option<&[Complex64]> {
        if i == 0 || i > self.blocks {
            return None;
        }
        let n = self.block_size();
        Some(&self.symbols[(i - 1) * n..i * n])
    }

    pub fn blocks(&self) -> std::slice::Chunks<'_, Complex64> {
        self.symbols.chunks(self.block_size())
    }

    /// `(1/k)·‖z‖²`.
    pub fn average_power(&self) -> f64 {
        average_power(&self.symbols)
    }
}

fn check_divisible(k: usize, m: usize) -> Result<()> {
    if m == 0 || k % m != 0 {
        return Err(Error::Config(format!(
            "{k} symbols cannot be split into {m} equal blocks"
        )));
    }
    Ok(())
}

/// Pairs consecutive reals into complex symbols.
pub fn real_to_complex(features: &[f64]) -> Result<Vec<Complex64>> {
    if features.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "odd-length feature vector ({}) cannot map to complex symbols",
            features.len()
        )));
    }
    Ok(features
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect())
}

pub fn complex_to_real(symbols: &[Complex64]) -> Vec<f64> {
    symbols.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn average_power(symbols: &[Complex64]) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    symbols.iter().map(|z| z.norm_sqr()).sum::<f64>() / symbols.len() as f64
}

/// Scales `symbols` so that `(1/k)·‖z‖² = power`.
pub fn power_normalize(symbols: &[Complex64], power: f64) -> Result<Vec<Complex64>> {
    let energy: f64 = symbols.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 || !energy.is_finite() {
        return Err(Error::ZeroPower);
    }
    let scale = (symbols.len() as f64 * power / energy).sqrt();
    Ok(symbols.iter().map(|z| z * scale).collect())
}

/// Splits `symbols` into `m` contiguous, equally sized views.
pub fn partition_blocks(symbols: &[Complex64], m: usize) -> Result<Vec<&[Complex64]>> {
    check_divisible(symbols.len(), m)?;
    Ok(symbols.chunks(symbols.len() / m).collect())
}

pub fn merge_blocks(blocks: &[&[Complex64]]) -> Vec<Complex64> {
    blocks.iter().flat_map(|b| b.iter().copied()).collect()
}

/// Row-wise power normalization of a `(B, n)` real tensor holding `n/2`
/// interleaved complex symbols per row. Differentiable.
pub fn power_normalize_rows(features: &Tensor, power: f64) -> Result<Tensor> {
    let (_, n) = features.dims2()?;
    if n % 2 != 0 {
        return Err(Error::Shape(format!("odd feature width {n}")));
    }
    let k = (n / 2) as f64;
    let energy = features.sqr()?.sum_keepdim(D::Minus1)?;
    let scale = energy.affine(1.0 / (k * power), 0.0)?.sqrt()?;
    Ok(features.broadcast_div(&scale)?)
}

/// `(B, 2k)` flat features to the `(B, d, m)` block view with `d = 2k/m`.
pub fn to_block_view(flat: &Tensor, m: usize) -> Result<Tensor> {
    let (b, n) = flat.dims2()?;
    if m == 0 || n % (2 * m) != 0 {
        return Err(Error::Config(format!(
            "{} symbols cannot be split into {m} equal blocks",
            n / 2
        )));
    }
    Ok(flat.reshape((b, m, n / m))?.transpose(1, 2)?.contiguous()?)
}

/// Inverse of [`to_block_view`].
pub fn from_block_view(blocks: &Tensor) -> Result<Tensor> {
    let (b, d, c) = blocks.dims3()?;
    Ok(blocks.transpose(1, 2)?.contiguous()?.reshape((b, c * d))?)
}

/// Complex symbols of item `index` in a `(B, d, c)` block view.
pub fn block_view_to_complex(blocks: &Tensor, index: usize) -> Result<Vec<Complex64>> {
    let flat = from_block_view(&blocks.narrow(0, index, 1)?)?
        .to_dtype(DType::F64)?
        .flatten_all()?
        .to_vec1::<f64>()?;
    real_to_complex(&flat)
}

/// `(1, d, c)` block view from complex symbols laid out block after block.
pub fn complex_to_block_view(
    symbols: &[Complex64],
    blocks: usize,
    dtype: DType,
    device: &Device,
) -> Result<Tensor> {
    check_divisible(symbols.len(), blocks)?;
    let real = complex_to_real(symbols);
    let n = real.len();
    let flat = Tensor::from_vec(real, (1, n), device)?.to_dtype(dtype)?;
    to_block_view(&flat, blocks)
}
