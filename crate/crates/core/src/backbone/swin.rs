//! Hierarchical shifted-window transformer encoder.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, ConvSpec, LayerNorm, Linear};
use super::params::{Init, Scope};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwinConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depths: Vec<usize>,
    pub num_heads: Vec<usize>,
    pub window_size: usize,
    pub mlp_ratio: usize,
}

impl SwinConfig {
    /// Swin-Tiny: 96-d patches, depths 2/2/6/2, 768-d output.
    pub fn tiny_224() -> Self {
        Self {
            patch_size: 4,
            embed_dim: 96,
            depths: vec![2, 2, 6, 2],
            num_heads: vec![3, 6, 12, 24],
            window_size: 7,
            mlp_ratio: 4,
        }
    }

    /// Two-stage test encoder producing `2 × embed_dim` features.
    pub fn test_scale(out_dim: usize) -> Self {
        Self {
            patch_size: 4,
            embed_dim: out_dim / 2,
            depths: vec![2, 2],
            num_heads: vec![2, 4],
            window_size: 4,
            mlp_ratio: 2,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.embed_dim << (self.depths.len().saturating_sub(1))
    }

    pub fn validate(&self, input_size: usize) -> Result<()> {
        if self.depths.is_empty() || self.depths.len() != self.num_heads.len() {
            return Err(Error::Config(
                "swin depths and num_heads must be nonempty and equal length".into(),
            ));
        }
        for (i, &h) in self.num_heads.iter().enumerate() {
            let dim = self.embed_dim << i;
            if h == 0 || dim % h != 0 {
                return Err(Error::Config(format!(
                    "stage {i}: dim {dim} not divisible by {h} heads"
                )));
            }
        }
        let stride = self.patch_size << (self.depths.len() - 1);
        if input_size % stride != 0 {
            return Err(Error::Config(format!(
                "input size {input_size} must be a multiple of {stride}"
            )));
        }
        let mut res = input_size / self.patch_size;
        for _ in 0..self.depths.len() {
            let win = self.window_size.min(res);
            if res % win != 0 {
                return Err(Error::Config(format!(
                    "resolution {res} not divisible by window {win}"
                )));
            }
            res /= 2;
        }
        Ok(())
    }
}

/// `(B, H, W, C)` → `(B·nW, ws·ws, C)`.
fn window_partition(x: &Tensor, ws: usize) -> Result<Tensor> {
    let (b, h, w, c) = x.dims4()?;
    Ok(x.reshape((b, h / ws, ws, w / ws, ws, c))?
        .permute((0, 1, 3, 2, 4, 5))?
        .contiguous()?
        .reshape((b * (h / ws) * (w / ws), ws * ws, c))?)
}

/// Inverse of [`window_partition`].
fn window_reverse(windows: &Tensor, ws: usize, h: usize, w: usize) -> Result<Tensor> {
    let c = windows.dim(D::Minus1)?;
    let b = windows.dim(0)? / ((h / ws) * (w / ws));
    Ok(windows
        .reshape((b, h / ws, w / ws, ws, ws, c))?
        .permute((0, 1, 3, 2, 4, 5))?
        .contiguous()?
        .reshape((b, h, w, c))?)
}

/// Additive mask `(nW, N, N)` that blocks attention across the regions
/// that a cyclic shift brings into one window.
fn shift_mask(
    h: usize,
    w: usize,
    ws: usize,
    shift: usize,
    dtype: DType,
    dev: &Device,
) -> Result<Tensor> {
    let region = |i: usize, n: usize| {
        if i < n - ws {
            0
        } else if i < n - shift {
            1
        } else {
            2
        }
    };
    let nw = (h / ws) * (w / ws);
    let n = ws * ws;
    let mut out = vec![0f32; nw * n * n];
    for wy in 0..h / ws {
        for wx in 0..w / ws {
            let widx = wy * (w / ws) + wx;
            let ids: Vec<usize> = (0..n)
                .map(|t| {
                    let (y, x) = (wy * ws + t / ws, wx * ws + t % ws);
                    region(y, h) * 3 + region(x, w)
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    if ids[i] != ids[j] {
                        out[widx * n * n + i * n + j] = -100.0;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(out, (nw, n, n), dev)?.to_dtype(dtype)?)
}

/// Index into the relative-position bias table for every token pair.
fn relative_position_index(ws: usize) -> Vec<u32> {
    let n = ws * ws;
    let mut idx = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let dy = (i / ws) as isize - (j / ws) as isize + ws as isize - 1;
            let dx = (i % ws) as isize - (j % ws) as isize + ws as isize - 1;
            idx.push((dy * (2 * ws as isize - 1) + dx) as u32);
        }
    }
    idx
}

#[derive(Debug, Clone)]
struct WindowAttention {
    qkv: Linear,
    proj: Linear,
    bias_table: Tensor,
    bias_index: Tensor,
    heads: usize,
    scale: f64,
    ws: usize,
}

impl WindowAttention {
    fn new(dim: usize, heads: usize, ws: usize, s: &mut Scope) -> Result<Self> {
        let init = Init::TruncNormal { std: 0.02 };
        let bias_table = s.param(
            "relative_position_bias_table",
            &[(2 * ws - 1).pow(2), heads],
            init,
        )?;
        let index = relative_position_index(ws);
        let bias_index = Tensor::from_vec(index, ws * ws * ws * ws, &s.device())?;
        Ok(Self {
            qkv: Linear::new(dim, 3 * dim, true, init, &mut s.pp("qkv"))?,
            proj: Linear::new(dim, dim, true, init, &mut s.pp("proj"))?,
            bias_table,
            bias_index,
            heads,
            scale: ((dim / heads) as f64).powf(-0.5),
            ws,
        })
    }

    /// `x`: `(B·nW, N, C)`; `mask`: optional `(nW, N, N)`.
    fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (bw, n, c) = x.dims3()?;
        let hd = c / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((bw, n, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = (qkv.get(0)?.contiguous()? * self.scale)?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;

        let mut attn = q.matmul(&k.t()?)?;
        let nn = self.ws * self.ws;
        let bias = self
            .bias_table
            .index_select(&self.bias_index, 0)?
            .reshape((nn, nn, self.heads))?
            .permute((2, 0, 1))?
            .unsqueeze(0)?;
        attn = attn.broadcast_add(&bias)?;
        if let Some(mask) = mask {
            let nw = mask.dim(0)?;
            attn = attn
                .reshape((bw / nw, nw, self.heads, n, n))?
                .broadcast_add(&mask.unsqueeze(1)?.unsqueeze(0)?)?
                .reshape((bw, self.heads, n, n))?;
        }
        let attn = candle_nn::ops::softmax(&attn, D::Minus1)?;
        let y = attn.matmul(&v)?.transpose(1, 2)?.reshape((bw, n, c))?;
        self.proj.forward(&y)
    }
}

#[derive(Debug, Clone)]
struct SwinBlock {
    norm1: LayerNorm,
    attn: WindowAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    ws: usize,
    shift: usize,
    mask: Option<Tensor>,
}

impl SwinBlock {
    fn new(
        dim: usize,
        heads: usize,
        res: usize,
        window: usize,
        shifted: bool,
        mlp_ratio: usize,
        s: &mut Scope,
    ) -> Result<Self> {
        let ws = window.min(res);
        let shift = if shifted && res > window { ws / 2 } else { 0 };
        let init = Init::TruncNormal { std: 0.02 };
        let mask = if shift > 0 {
            Some(shift_mask(res, res, ws, shift, s.dtype(), &s.device())?)
        } else {
            None
        };
        Ok(Self {
            norm1: LayerNorm::new(dim, &mut s.pp("norm1"))?,
            attn: WindowAttention::new(dim, heads, ws, &mut s.pp("attn"))?,
            norm2: LayerNorm::new(dim, &mut s.pp("norm2"))?,
            fc1: Linear::new(dim, dim * mlp_ratio, true, init, &mut s.pp("mlp.fc1"))?,
            fc2: Linear::new(dim * mlp_ratio, dim, true, init, &mut s.pp("mlp.fc2"))?,
            ws,
            shift,
            mask,
        })
    }

    /// `x`: `(B, H, W, C)`.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let mut y = self.norm1.forward(x)?;
        if self.shift > 0 {
            let s = -(self.shift as i32);
            y = y.roll(s, 1)?.roll(s, 2)?;
        }
        let windows = window_partition(&y, self.ws)?;
        let windows = self.attn.forward(&windows, self.mask.as_ref())?;
        y = window_reverse(&windows, self.ws, h, w)?;
        if self.shift > 0 {
            let s = self.shift as i32;
            y = y.roll(s, 1)?.roll(s, 2)?;
        }
        let x = (x + y)?;
        let m = self.norm2.forward(&x.reshape((b, h * w, c))?)?;
        let m = self.fc2.forward(&self.fc1.forward(&m)?.gelu_erf()?)?;
        Ok((x + m.reshape((b, h, w, c))?)?)
    }
}

#[derive(Debug, Clone)]
struct PatchMerging {
    norm: LayerNorm,
    reduction: Linear,
}

impl PatchMerging {
    fn new(dim: usize, s: &mut Scope) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(4 * dim, &mut s.pp("norm"))?,
            reduction: Linear::new(
                4 * dim,
                2 * dim,
                false,
                Init::TruncNormal { std: 0.02 },
                &mut s.pp("reduction"),
            )?,
        })
    }

    /// `(B, H, W, C)` → `(B, H/2, W/2, 2C)`.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let t = x.reshape((b, h / 2, 2, w / 2, 2, c))?;
        let pick = |dy: usize, dx: usize| -> Result<Tensor> {
            Ok(t.narrow(2, dy, 1)?
                .narrow(4, dx, 1)?
                .reshape((b, h / 2, w / 2, c))?)
        };
        let merged = Tensor::cat(&[pick(0, 0)?, pick(1, 0)?, pick(0, 1)?, pick(1, 1)?], 3)?;
        self.reduction.forward(&self.norm.forward(&merged)?)
    }
}

/// Shifted-window encoder ending in layer norm and global average pooling.
#[derive(Debug, Clone)]
pub struct SwinEncoder {
    patch_embed: Conv2d,
    patch_norm: LayerNorm,
    stages: Vec<(Vec<SwinBlock>, Option<PatchMerging>)>,
    norm: LayerNorm,
    cfg: SwinConfig,
}

impl SwinEncoder {
    pub fn new(cfg: &SwinConfig, input_size: usize, s: &mut Scope) -> Result<Self> {
        cfg.validate(input_size)?;
        let patch_embed = Conv2d::with_init(
            ConvSpec::same(3, cfg.embed_dim, cfg.patch_size)
                .stride(cfg.patch_size)
                .padding(0)
                .bias(true),
            Init::TruncNormal { std: 0.02 },
            Init::Zeros,
            &mut s.pp("patch_embed.proj"),
        )?;
        let patch_norm = LayerNorm::new(cfg.embed_dim, &mut s.pp("patch_embed.norm"))?;
        let mut res = input_size / cfg.patch_size;
        let mut stages = Vec::new();
        let n = cfg.depths.len();
        for (i, (&depth, &heads)) in cfg.depths.iter().zip(&cfg.num_heads).enumerate() {
            let dim = cfg.embed_dim << i;
            let blocks = (0..depth)
                .map(|d| {
                    SwinBlock::new(
                        dim,
                        heads,
                        res,
                        cfg.window_size,
                        d % 2 == 1,
                        cfg.mlp_ratio,
                        &mut s.pp(format!("layers.{i}.blocks.{d}")),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let merge = if i + 1 < n {
                Some(PatchMerging::new(
                    dim,
                    &mut s.pp(format!("layers.{i}.downsample")),
                )?)
            } else {
                None
            };
            stages.push((blocks, merge));
            res /= 2;
        }
        let norm = LayerNorm::new(cfg.out_dim(), &mut s.pp("norm"))?;
        Ok(Self {
            patch_embed,
            patch_norm,
            stages,
            norm,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &SwinConfig {
        &self.cfg
    }

    /// `(B, 3, S, S)` → `(B, out_dim)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.patch_embed.forward(x)?;
        let (b, c, h, w) = y.dims4()?;
        let mut y = self.patch_norm.forward(&y.permute((0, 2, 3, 1))?)?;
        debug_assert_eq!(y.dims(), &[b, h, w, c]);
        for (blocks, merge) in &self.stages {
            for blk in blocks {
                y = blk.forward(&y)?;
            }
            if let Some(m) = merge {
                y = m.forward(&y)?;
            }
        }
        let (b, h, w, c) = y.dims4()?;
        let y = self.norm.forward(&y.reshape((b, h * w, c))?)?;
        Ok(y.mean(1)?)
    }
}
