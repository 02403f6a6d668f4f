//! Convolutional local-feature trunks.

use candle_core::{Tensor, D};

use super::layers::{BatchNorm2d, Conv2d, ConvSpec};
use super::params::Scope;
use crate::error::Result;

/// Conv → BN → optional SiLU.
#[derive(Debug, Clone)]
struct ConvBnAct {
    conv: Conv2d,
    bn: BatchNorm2d,
    act: bool,
}

impl ConvBnAct {
    fn new(spec: ConvSpec, act: bool, s: &mut Scope) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(spec, &mut s.pp("conv"))?,
            bn: BatchNorm2d::new(spec.out_ch, &mut s.pp("bn"))?,
            act,
        })
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.bn.forward_t(&self.conv.forward(x)?, train)?;
        Ok(if self.act { y.silu()? } else { y })
    }
}

#[derive(Debug, Clone)]
struct SqueezeExcite {
    reduce: Conv2d,
    expand: Conv2d,
}

impl SqueezeExcite {
    fn new(channels: usize, squeeze: usize, s: &mut Scope) -> Result<Self> {
        Ok(Self {
            reduce: Conv2d::new(
                ConvSpec::same(channels, squeeze, 1).bias(true),
                &mut s.pp("reduce"),
            )?,
            expand: Conv2d::new(
                ConvSpec::same(squeeze, channels, 1).bias(true),
                &mut s.pp("expand"),
            )?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let pooled = x.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
        let gate = self.reduce.forward(&pooled)?.silu()?;
        let gate = candle_nn::ops::sigmoid(&self.expand.forward(&gate)?)?;
        Ok(x.broadcast_mul(&gate)?)
    }
}

/// Mobile inverted bottleneck with squeeze-and-excitation.
#[derive(Debug, Clone)]
struct MbConv {
    expand: Option<ConvBnAct>,
    depthwise: ConvBnAct,
    se: SqueezeExcite,
    project: ConvBnAct,
    residual: bool,
}

impl MbConv {
    fn new(
        in_ch: usize,
        out_ch: usize,
        expand_ratio: usize,
        kernel: usize,
        stride: usize,
        s: &mut Scope,
    ) -> Result<Self> {
        let mid = in_ch * expand_ratio;
        let expand = if expand_ratio != 1 {
            Some(ConvBnAct::new(
                ConvSpec::same(in_ch, mid, 1),
                true,
                &mut s.pp("expand"),
            )?)
        } else {
            None
        };
        let depthwise = ConvBnAct::new(
            ConvSpec::same(mid, mid, kernel).stride(stride).groups(mid),
            true,
            &mut s.pp("depthwise"),
        )?;
        let se = SqueezeExcite::new(mid, (in_ch / 4).max(1), &mut s.pp("se"))?;
        let project = ConvBnAct::new(ConvSpec::same(mid, out_ch, 1), false, &mut s.pp("project"))?;
        Ok(Self {
            expand,
            depthwise,
            se,
            project,
            residual: stride == 1 && in_ch == out_ch,
        })
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut y = match &self.expand {
            Some(e) => e.forward_t(x, train)?,
            None => x.clone(),
        };
        y = self.depthwise.forward_t(&y, train)?;
        y = self.se.forward(&y)?;
        y = self.project.forward_t(&y, train)?;
        Ok(if self.residual { (y + x)? } else { y })
    }
}

/// `(expand_ratio, kernel, stride, out_channels, repeats)` per stage of B0.
const B0_STAGES: [(usize, usize, usize, usize, usize); 7] = [
    (1, 3, 1, 16, 1),
    (6, 3, 2, 24, 2),
    (6, 5, 2, 40, 2),
    (6, 3, 2, 80, 3),
    (6, 5, 1, 112, 3),
    (6, 5, 2, 192, 4),
    (6, 3, 1, 320, 1),
];

/// EfficientNet-B0 convolutional trunk (classifier removed).
///
/// Maps `(B, 3, 224, 224)` to `(B, out_channels, 7, 7)`; the head width is
/// 1280 for the standard network.
#[derive(Debug, Clone)]
pub struct EfficientNetB0 {
    stem: ConvBnAct,
    blocks: Vec<MbConv>,
    head: ConvBnAct,
}

impl EfficientNetB0 {
    pub fn new(out_channels: usize, s: &mut Scope) -> Result<Self> {
        let stem = ConvBnAct::new(ConvSpec::same(3, 32, 3).stride(2), true, &mut s.pp("stem"))?;
        let mut blocks = Vec::new();
        let mut in_ch = 32;
        for (stage, &(expand, kernel, stride, out_ch, repeats)) in B0_STAGES.iter().enumerate() {
            for r in 0..repeats {
                let stride = if r == 0 { stride } else { 1 };
                blocks.push(MbConv::new(
                    in_ch,
                    out_ch,
                    expand,
                    kernel,
                    stride,
                    &mut s.pp(format!("blocks.{stage}.{r}")),
                )?);
                in_ch = out_ch;
            }
        }
        let head = ConvBnAct::new(
            ConvSpec::same(in_ch, out_channels, 1),
            true,
            &mut s.pp("head"),
        )?;
        Ok(Self { stem, blocks, head })
    }

    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut y = self.stem.forward_t(x, train)?;
        for b in &self.blocks {
            y = b.forward_t(&y, train)?;
        }
        self.head.forward_t(&y, train)
    }
}

/// Five stride-2 conv/BN/SiLU layers: a stride-32 stand-in for the full
/// trunk with the same output-shape contract.
#[derive(Debug, Clone)]
pub struct TinyCnn {
    layers: Vec<ConvBnAct>,
}

impl TinyCnn {
    pub fn new(out_channels: usize, s: &mut Scope) -> Result<Self> {
        let widths = [16, 24, 32, 32, out_channels];
        let mut layers = Vec::with_capacity(widths.len());
        let mut in_ch = 3;
        for (i, &w) in widths.iter().enumerate() {
            let kernel = if i < 2 { 5 } else { 3 };
            layers.push(ConvBnAct::new(
                ConvSpec::same(in_ch, w, kernel).stride(2),
                true,
                &mut s.pp(i),
            )?);
            in_ch = w;
        }
        Ok(Self { layers })
    }

    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut y = x.clone();
        for l in &self.layers {
            y = l.forward_t(&y, train)?;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub enum CnnTrunk {
    EfficientNet(EfficientNetB0),
    Tiny(TinyCnn),
}

impl CnnTrunk {
    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            CnnTrunk::EfficientNet(m) => m.forward_t(x, train),
            CnnTrunk::Tiny(m) => m.forward_t(x, train),
        }
    }
}
