//! The initial-coding (IC) encoder and the mirrored static decoder.
//!
//! Encoder: five convolutions interleaved with four AF modules, all AF stages
//! conditioned on the initial CSI. The last convolution emits the latent map
//! whose `2k` reals become the `k` channel symbols. The decoder runs the same
//! stack in reverse with transposed convolutions and a sigmoid output.

use candle_core::{Module, Tensor};
use candle_nn::{
    conv2d, conv_transpose2d, prelu, Conv2d, Conv2dConfig, ConvTranspose2d, ConvTranspose2dConfig,
    PReLU, VarBuilder,
};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::latent::power_normalize_rows;
use crate::nn::AfModule;
use crate::{Error, Result};

/// One convolution stage, written `F×F|S` with `channels` outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, stride: usize, channels: usize) -> Self {
        Self { kernel, stride, channels }
    }

    fn padding(&self) -> usize {
        self.kernel / 2
    }

    fn output_size(&self, input: usize) -> Option<usize> {
        (input + 2 * self.padding())
            .checked_sub(self.kernel)
            .map(|v| v / self.stride + 1)
    }
}

/// Spatial sizes `[(h, w)]` before each stage and after the last one.
pub fn spatial_sizes(height: usize, width: usize, convs: &[ConvSpec]) -> Result<Vec<(usize, usize)>> {
    let mut sizes = vec![(height, width)];
    for (i, spec) in convs.iter().enumerate() {
        if spec.kernel == 0 || spec.stride == 0 || spec.channels == 0 {
            return Err(Error::Config(format!("conv stage {i} has a zero field: {spec:?}")));
        }
        let (h, w) = *sizes.last().unwrap();
        match (spec.output_size(h), spec.output_size(w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => sizes.push((oh, ow)),
            _ => {
                return Err(Error::Config(format!(
                    "conv stage {i} ({}x{}|{}) does not fit a {h}x{w} input",
                    spec.kernel, spec.kernel, spec.stride
                )))
            }
        }
    }
    Ok(sizes)
}

#[derive(Debug, Clone)]
struct EncoderStage {
    conv: Conv2d,
    act: PReLU,
    af: AfModule,
}

/// `f_θ(x, h₀)`: image to power-normalized interleaved symbols.
#[derive(Debug, Clone)]
pub struct StaticEncoder {
    stages: Vec<EncoderStage>,
    head: Conv2d,
    power: f64,
}

impl StaticEncoder {
    pub fn new(
        in_channels: usize,
        convs: &[ConvSpec],
        af_hidden: usize,
        power: f64,
        vb: VarBuilder,
    ) -> Result<Self> {
        let (last, hidden) = convs
            .split_last()
            .ok_or_else(|| Error::Config("encoder needs at least one convolution".into()))?;
        let mut stages = Vec::with_capacity(hidden.len());
        let mut c_in = in_channels;
        for (i, spec) in hidden.iter().enumerate() {
            let vb = vb.pp(format!("stage{i}"));
            stages.push(EncoderStage {
                conv: conv2d(c_in, spec.channels, spec.kernel, conv_config(spec), vb.pp("conv"))?,
                act: prelu(Some(spec.channels), vb.pp("prelu"))?,
                af: AfModule::new(spec.channels, af_hidden, vb.pp("af"))?,
            });
            c_in = spec.channels;
        }
        let head = conv2d(c_in, last.channels, last.kernel, conv_config(last), vb.pp("head"))?;
        Ok(Self { stages, head, power })
    }

    /// Latent feature map before flattening, `(B, c_latent, h, w)`.
    pub fn features(&self, images: &Tensor, csi: &Tensor) -> Result<Tensor> {
        let mut h = images.clone();
        for stage in &self.stages {
            h = stage.conv.forward(&h)?;
            h = stage.act.forward(&h)?;
            h = stage.af.forward(&h, csi)?;
        }
        Ok(self.head.forward(&h)?)
    }

    /// `(B, 2k)` interleaved symbols with per-image average power `P`.
    pub fn forward(&self, images: &Tensor, csi: &Tensor) -> Result<Tensor> {
        let latent = self.features(images, csi)?.flatten_from(1)?;
        power_normalize_rows(&latent, self.power)
    }
}

fn conv_config(spec: &ConvSpec) -> Conv2dConfig {
    Conv2dConfig {
        padding: spec.padding(),
        stride: spec.stride,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
struct DecoderStage {
    deconv: ConvTranspose2d,
    act: PReLU,
    af: AfModule,
}

/// `F_φ(ẑ^{h₀}, h₀)`: symbols back to an image in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct StaticDecoder {
    stages: Vec<DecoderStage>,
    head: ConvTranspose2d,
    latent_shape: (usize, usize, usize),
}

impl StaticDecoder {
    pub fn new(
        image: (usize, usize, usize),
        convs: &[ConvSpec],
        af_hidden: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let (channels, height, width) = image;
        let sizes = spatial_sizes(height, width, convs)?;
        let mut inputs: Vec<usize> = vec![channels];
        inputs.extend(convs.iter().map(|c| c.channels));
        let n = convs.len();
        let mut stages = Vec::with_capacity(n.saturating_sub(1));
        let mut head = None;
        // decoder stage i undoes encoder stage n-1-i
        for i in 0..n {
            let j = n - 1 - i;
            let spec = &convs[j];
            let (c_in, c_out) = (inputs[j + 1], inputs[j]);
            let (from, to) = (sizes[j + 1], sizes[j]);
            let base = |s: usize| (s - 1) * spec.stride + spec.kernel - 2 * spec.padding();
            let (bh, bw) = (base(from.0), base(from.1));
            if to.0 < bh || to.1 < bw || to.0 - bh >= spec.stride.max(1) || to.0 - bh != to.1 - bw {
                return Err(Error::Config(format!(
                    "transposed stage {i} cannot map {from:?} back to {to:?}"
                )));
            }
            let cfg = ConvTranspose2dConfig {
                padding: spec.padding(),
                output_padding: to.0 - bh,
                stride: spec.stride,
                dilation: 1,
            };
            if j == 0 {
                head = Some(conv_transpose2d(c_in, c_out, spec.kernel, cfg, vb.pp("head"))?);
            } else {
                let vb = vb.pp(format!("stage{i}"));
                stages.push(DecoderStage {
                    deconv: conv_transpose2d(c_in, c_out, spec.kernel, cfg, vb.pp("deconv"))?,
                    act: prelu(Some(c_out), vb.pp("prelu"))?,
                    af: AfModule::new(c_out, af_hidden, vb.pp("af"))?,
                });
            }
        }
        let (h, w) = sizes[n];
        Ok(Self {
            stages,
            head: head.ok_or_else(|| Error::Config("decoder needs at least one convolution".into()))?,
            latent_shape: (inputs[n], h, w),
        })
    }

    /// Reconstructs `(B, C, H, W)` images from `(B, 2k)` symbols.
    pub fn forward(&self, symbols: &Tensor, csi: &Tensor) -> Result<Tensor> {
        let (b, n) = symbols.dims2()?;
        let (c, h, w) = self.latent_shape;
        if n != c * h * w {
            return Err(Error::Shape(format!("decoder expects {} reals, got {n}", c * h * w)));
        }
        let mut x = symbols.reshape((b, c, h, w))?;
        for stage in &self.stages {
            x = stage.deconv.forward(&x)?;
            x = stage.act.forward(&x)?;
            x = stage.af.forward(&x, csi)?;
        }
        Ok(candle_nn::ops::sigmoid(&self.head.forward(&x)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_lands_on_eight_by_eight() {
        let convs = [
            ConvSpec::new(9, 2, 16),
            ConvSpec::new(5, 2, 32),
            ConvSpec::new(5, 1, 32),
            ConvSpec::new(5, 1, 32),
            ConvSpec::new(5, 1, 8),
        ];
        let sizes = spatial_sizes(32, 32, &convs).unwrap();
        assert_eq!(sizes, vec![(32, 32), (16, 16), (8, 8), (8, 8), (8, 8), (8, 8)]);
    }

    #[test]
    fn degenerate_stages_are_config_errors() {
        assert!(spatial_sizes(0, 4, &[ConvSpec::new(3, 1, 4)]).is_err());
        assert!(spatial_sizes(4, 4, &[ConvSpec::new(3, 0, 4)]).is_err());
    }
}
