use candle_core::{Tensor, D};

use super::layers::{Conv2d, ConvSpec};
use super::params::{Init, Scope};
use crate::error::Result;

/// Spatial gate over a `(B, C, H, W)` feature map.
///
/// The channel-mean and channel-max planes form a 2-channel descriptor; a
/// single `k×k` convolution (same padding) and a sigmoid turn it into a
/// `(B, 1, H, W)` map in (0, 1) that rescales every channel.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    conv: Conv2d,
}

impl SpatialAttention {
    pub fn new(kernel: usize, s: &mut Scope) -> Result<Self> {
        let init = Init::TruncNormal { std: 0.02 };
        let conv = Conv2d::with_init(
            ConvSpec::same(2, 1, kernel).bias(true),
            init,
            Init::Zeros,
            s,
        )?;
        Ok(Self { conv })
    }

    /// Pre-sigmoid logits, `(B, 1, H, W)`.
    pub fn logits(&self, fmap: &Tensor) -> Result<Tensor> {
        let mean = fmap.mean_keepdim(1)?;
        let max = fmap.max_keepdim(1)?;
        self.conv.forward(&Tensor::cat(&[mean, max], 1)?)
    }

    /// Returns `(gated, attention_map)`.
    pub fn forward(&self, fmap: &Tensor) -> Result<(Tensor, Tensor)> {
        let amap = candle_nn::ops::sigmoid(&self.logits(fmap)?)?;
        let gated = fmap.broadcast_mul(&amap)?;
        Ok((gated, amap))
    }
}

/// Global average pooling `(B, C, H, W)` → `(B, C)`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean(D::Minus1)?.mean(D::Minus1)?)
}
