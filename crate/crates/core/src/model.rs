//! Model configuration and the bundle of all learned parameter sets.

use candle_core::{DType, Device, Tensor};
use candle_nn::{VarBuilder, VarMap};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::channel::Csi;
use crate::codec_dynamic::{RcModule, RcShape};
use crate::codec_static::{spatial_sizes, ConvSpec, StaticDecoder, StaticEncoder};
use crate::latent::{self, BandwidthConfig, ImageTensor, SymbolBlocks};
use crate::nn::{self, CsiScale};
use crate::{Error, Result};

/// Parameter-name prefixes of the four learned sets.
pub const STATIC_ENCODER: &str = "static_enc";
pub const STATIC_DECODER: &str = "static_dec";
pub const DYNAMIC_ENCODER: &str = "dyn_enc";
pub const DYNAMIC_DECODER: &str = "dyn_dec";

/// Architecture and bandwidth of a codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `[channels, height, width]` of the source images.
    pub image: [usize; 3],
    /// Bandwidth ratio `R` as `[numerator, denominator]`.
    pub ratio: [usize; 2],
    /// Block count `m`.
    pub blocks: usize,
    /// The five encoder convolutions; the last one's `channels` is the latent depth.
    pub conv: Vec<ConvSpec>,
    pub af_hidden: usize,
    /// Kernel of the stride-1 reconstruction convolutions in the RC module.
    pub rc_kernel: usize,
    /// Convolutions in the reconstruction stack (AF modules sit between them).
    pub rc_layers: usize,
    pub lambda_hidden: usize,
    /// SNR window mapped onto [0, 1] for every CSI input.
    pub csi_range_db: [f64; 2],
    /// Average symbol power budget `P`.
    pub power: f64,
}

impl ModelConfig {
    /// CIFAR-sized codec with the 9×9|2, 5×5|2, then 5×5|1 stack, giving an
    /// 8×8 latent map whose depth is chosen so that it holds exactly `2k` reals.
    pub fn cifar(ratio: [usize; 2], blocks: usize, widths: (usize, usize)) -> Result<Self> {
        let bw = BandwidthConfig::from_ratio(3 * 32 * 32, ratio[0], ratio[1])?;
        if (2 * bw.symbols) % 64 != 0 {
            return Err(Error::Config(format!("2k = {} is not a multiple of the 8x8 latent map", 2 * bw.symbols)));
        }
        let (c1, c2) = widths;
        let cfg = Self {
            image: [3, 32, 32],
            ratio,
            blocks,
            conv: vec![
                ConvSpec::new(9, 2, c1),
                ConvSpec::new(5, 2, c2),
                ConvSpec::new(5, 1, c2),
                ConvSpec::new(5, 1, c2),
                ConvSpec::new(5, 1, 2 * bw.symbols / 64),
            ],
            af_hidden: 16,
            rc_kernel: 3,
            rc_layers: 5,
            lambda_hidden: 16,
            csi_range_db: [0.0, 20.0],
            power: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Desk-scale widths used by the examples and acceptance runs.
    pub fn desk(ratio: [usize; 2], blocks: usize) -> Result<Self> {
        Self::cifar(ratio, blocks, (16, 32))
    }

    pub fn source_len(&self) -> usize {
        self.image.iter().product()
    }

    pub fn bandwidth(&self) -> Result<BandwidthConfig> {
        BandwidthConfig::from_ratio(self.source_len(), self.ratio[0], self.ratio[1])
    }

    /// `k`.
    pub fn symbols(&self) -> usize {
        self.bandwidth().map(|b| b.symbols).unwrap_or(0)
    }

    /// Reals per block, `d = 2k/m`.
    pub fn block_width(&self) -> usize {
        2 * self.symbols() / self.blocks
    }

    pub fn csi_scale(&self) -> CsiScale {
        CsiScale {
            low_db: self.csi_range_db[0],
            high_db: self.csi_range_db[1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.bandwidth()?.symbols;
        if self.conv.len() != 5 {
            return Err(Error::Config(format!(
                "the encoder has exactly 5 convolutions, got {}",
                self.conv.len()
            )));
        }
        if self.blocks == 0 || k % self.blocks != 0 {
            return Err(Error::Config(format!("k = {k} is not divisible by m = {}", self.blocks)));
        }
        let sizes = spatial_sizes(self.image[1], self.image[2], &self.conv)?;
        let (h, w) = sizes[sizes.len() - 1];
        let latent = h * w * self.conv[4].channels;
        if latent != 2 * k {
            return Err(Error::Config(format!(
                "encoder emits {latent} reals ({h}x{w}x{}) but R requires 2k = {}",
                self.conv[4].channels,
                2 * k
            )));
        }
        if !(self.power > 0.0) || self.csi_range_db[1] <= self.csi_range_db[0] {
            return Err(Error::Config("power must be positive and the CSI range non-empty".into()));
        }
        Ok(())
    }
}

/// Which pipeline a parameter bundle is trained and evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Static codec plus re-encoding on every channel change.
    Drjscc,
    /// Static codec only, conditioned on the session's mean SNR.
    StaticOnly,
    /// Static codec only, always conditioned on one SNR.
    StaticFixedSnr { snr_db: f64 },
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::Drjscc => "drjscc".into(),
            Variant::StaticOnly => "static-only".into(),
            Variant::StaticFixedSnr { snr_db } => format!("static-fixed-snr@{snr_db}dB"),
        }
    }

    pub fn refines(&self) -> bool {
        matches!(self, Variant::Drjscc)
    }

    /// CSI the static codec is conditioned on for a session.
    pub fn conditioning(&self, per_block: &[Csi]) -> Csi {
        match *self {
            Variant::Drjscc => per_block[0],
            Variant::StaticOnly => Csi::block_mean(per_block),
            Variant::StaticFixedSnr { snr_db } => Csi::from_snr_db(snr_db),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    /// Accepts `drjscc`, `static-only` and `static-fixed-snr@<dB>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drjscc" => Ok(Variant::Drjscc),
            "static-only" => Ok(Variant::StaticOnly),
            _ => s
                .strip_prefix("static-fixed-snr@")
                .map(|v| v.trim_end_matches("dB"))
                .and_then(|v| v.parse().ok())
                .map(|snr_db| Variant::StaticFixedSnr { snr_db })
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown variant {s:?}; expected drjscc, static-only or static-fixed-snr@<dB>"
                    ))
                }),
        }
    }
}

/// All learned parameter sets: static encoder θ, dynamic encoder ζ, static
/// decoder φ and dynamic decoder ψ (each RC module carries its own λ-net and
/// reconstruction stack).
pub struct Drjscc {
    config: ModelConfig,
    varmap: VarMap,
    dtype: DType,
    device: Device,
    pub static_encoder: StaticEncoder,
    pub static_decoder: StaticDecoder,
    pub dynamic_encoder: RcModule,
    pub dynamic_decoder: RcModule,
}

impl std::fmt::Debug for Drjscc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Drjscc")
            .field("config", &self.config)
            .field("dtype", &self.dtype)
            .field("parameters", &self.parameter_count())
            .finish_non_exhaustive()
    }
}

impl Drjscc {
    /// Builds the model with seeded initial parameters.
    pub fn new(config: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, dtype, device);
        let [c, h, w] = config.image;
        let static_encoder =
            StaticEncoder::new(c, &config.conv, config.af_hidden, config.power, vb.pp(STATIC_ENCODER))?;
        let static_decoder = StaticDecoder::new((c, h, w), &config.conv, config.af_hidden, vb.pp(STATIC_DECODER))?;
        let shape = RcShape {
            block_width: config.block_width(),
            kernel: config.rc_kernel,
            layers: config.rc_layers,
            af_hidden: config.af_hidden,
            lambda_hidden: config.lambda_hidden,
        };
        let scale = config.csi_scale();
        let dynamic_encoder = RcModule::new(shape, scale, Some(config.power), vb.pp(DYNAMIC_ENCODER))?;
        let dynamic_decoder = RcModule::new(shape, scale, None, vb.pp(DYNAMIC_DECODER))?;
        nn::init_parameters(&varmap, seed)?;
        Ok(Self {
            config,
            varmap,
            dtype,
            device: device.clone(),
            static_encoder,
            static_decoder,
            dynamic_encoder,
            dynamic_decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn blocks(&self) -> usize {
        self.config.blocks
    }

    pub fn csi_column(&self, csi: &[Csi]) -> Result<Tensor> {
        self.config.csi_scale().column(csi, self.dtype, &self.device)
    }

    /// `(B, 2k)` normalized symbols for a batch of images.
    pub fn encode(&self, images: &Tensor, csi: &[Csi]) -> Result<Tensor> {
        self.static_encoder.forward(images, &self.csi_column(csi)?)
    }

    pub fn decode(&self, symbols: &Tensor, csi: &[Csi]) -> Result<Tensor> {
        self.static_decoder.forward(symbols, &self.csi_column(csi)?)
    }

    /// Encodes one image into `m` symbol blocks.
    pub fn ic_encode(&self, image: &ImageTensor, csi: Csi) -> Result<SymbolBlocks> {
        self.check_image(image)?;
        let z = self.encode(&image.to_tensor(self.dtype, &self.device)?, &[csi])?;
        let view = latent::to_block_view(&z, self.config.blocks)?;
        SymbolBlocks::new(latent::block_view_to_complex(&view, 0)?, self.config.blocks)
    }

    /// Decodes `k` symbols in the initial-channel space into an image.
    pub fn static_decode(&self, symbols: &SymbolBlocks, csi: Csi) -> Result<ImageTensor> {
        if symbols.len() != self.config.symbols() {
            return Err(Error::Shape(format!(
                "expected {} symbols, got {}",
                self.config.symbols(),
                symbols.len()
            )));
        }
        let real = latent::complex_to_real(symbols.symbols());
        let n = real.len();
        let t = Tensor::from_vec(real, (1, n), &self.device)?.to_dtype(self.dtype)?;
        ImageTensor::from_tensor(&self.decode(&t, &[csi])?, 0)
    }

    pub fn check_image(&self, image: &ImageTensor) -> Result<()> {
        let [c, h, w] = self.config.image;
        if image.shape() != (c, h, w) {
            return Err(Error::Shape(format!(
                "model expects {c}x{h}x{w} images, got {:?}",
                image.shape()
            )));
        }
        Ok(())
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        nn::sorted_vars(&self.varmap).iter().map(|(_, v)| v.elem_count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_configs_match_bandwidth() {
        let a = ModelConfig::desk([1, 12], 8).unwrap();
        assert_eq!(a.symbols(), 256);
        assert_eq!(a.conv[4].channels, 8);
        assert_eq!(a.block_width(), 64);
        let b = ModelConfig::desk([1, 6], 16).unwrap();
        assert_eq!(b.symbols(), 512);
        assert_eq!(b.conv[4].channels, 16);
        assert_eq!(b.block_width(), 64);
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut c = ModelConfig::desk([1, 12], 8).unwrap();
        c.conv[4].channels = 7;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::desk([1, 12], 8).unwrap();
        c.blocks = 7;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk([1, 12], 8).unwrap();
        c.conv.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn static_only_conditions_on_block_mean() {
        let per_block = [Csi::from_snr_db(19.0), Csi::from_snr_db(19.0), Csi::from_snr_db(1.0), Csi::from_snr_db(1.0)];
        assert_eq!(Variant::StaticOnly.conditioning(&per_block).snr_db, 10.0);
        assert_eq!(Variant::Drjscc.conditioning(&per_block).snr_db, 19.0);
        assert_eq!(Variant::StaticFixedSnr { snr_db: 7.0 }.conditioning(&per_block).snr_db, 7.0);
    }
}
