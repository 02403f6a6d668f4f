//! Minimal layer set built directly on tensor ops so that every parameter
//! lives in a [`ParamStore`](super::params::ParamStore).

use candle_core::{DType, Tensor, Var, D};
use rand::Rng;

use super::params::{Init, Scope};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
    groups: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Stride-1 convolution with "same" padding and no bias.
    pub fn same(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding: kernel / 2,
            groups: 1,
            bias: false,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }
}

impl Conv2d {
    /// Kaiming (fan-out) weights, zero bias.
    pub fn new(spec: ConvSpec, s: &mut Scope) -> Result<Self> {
        let fan_out = spec.out_ch / spec.groups * spec.kernel * spec.kernel;
        Self::with_init(spec, Init::Kaiming { fan: fan_out }, Init::Zeros, s)
    }

    pub fn with_init(spec: ConvSpec, w_init: Init, b_init: Init, s: &mut Scope) -> Result<Self> {
        let weight = s.param(
            "weight",
            &[
                spec.out_ch,
                spec.in_ch / spec.groups,
                spec.kernel,
                spec.kernel,
            ],
            w_init,
        )?;
        let bias = if spec.bias {
            Some(s.param("bias", &[spec.out_ch], b_init)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride: spec.stride,
            padding: spec.padding,
            groups: spec.groups,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, self.groups)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, (), 1, 1))?)?,
            None => y,
        })
    }
}

/// Batch normalization over `(B, C, H, W)` with running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    weight: Tensor,
    bias: Tensor,
    running_mean: Var,
    running_var: Var,
    eps: f64,
    momentum: f64,
}

impl BatchNorm2d {
    pub fn new(channels: usize, s: &mut Scope) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[channels], Init::Ones)?,
            bias: s.param("bias", &[channels], Init::Zeros)?,
            running_mean: s.buffer("running_mean", &[channels], Init::Zeros)?,
            running_var: s.buffer("running_var", &[channels], Init::Ones)?,
            eps: 1e-5,
            momentum: 0.1,
        })
    }

    /// In training mode, normalizes with batch statistics and updates the
    /// running estimates; otherwise uses the running estimates.
    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let c = x.dim(1)?;
        let (mean, var) = if train {
            let n = x.elem_count() / c;
            let mean = x.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered
                .sqr()?
                .mean_keepdim(0)?
                .mean_keepdim(2)?
                .mean_keepdim(3)?;
            let m = self.momentum;
            let unbiased = (var.flatten_all()?.detach() * (n as f64 / (n.max(2) - 1) as f64))?;
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))?
                + (mean.flatten_all()?.detach() * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape((1, c, 1, 1))?,
                self.running_var.as_tensor().reshape((1, c, 1, 1))?,
            )
        };
        let inv = (var + self.eps)?.sqrt()?.recip()?;
        let y = x.broadcast_sub(&mean)?.broadcast_mul(&inv)?;
        Ok(y.broadcast_mul(&self.weight.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        w_init: Init,
        s: &mut Scope,
    ) -> Result<Self> {
        let weight = s.param("weight", &[out_dim, in_dim], w_init)?;
        let bias = if bias {
            Some(s.param("bias", &[out_dim], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    /// Applies `x · Wᵀ + b` over the last dimension of any-rank input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match x.rank() {
            2 => x.matmul(&self.weight.t()?)?,
            _ => x.broadcast_matmul(&self.weight.t()?)?,
        };
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

/// Layer normalization over the last dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize, s: &mut Scope) -> Result<Self> {
        Ok(Self {
            weight: s.param("weight", &[dim], Init::Ones)?,
            bias: s.param("bias", &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let y = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(y.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

/// Inverted dropout with a caller-supplied RNG, so runs are reproducible.
pub fn dropout(x: &Tensor, p: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| {
            if rng.random::<f64>() < keep {
                (1.0 / keep) as f32
            } else {
                0.0
            }
        })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

/// Host copy of a tensor as `f64`, whatever its dtype.
pub fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::params::ParamStore;
    use candle_core::Device;
    use rand::SeedableRng;

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let mut store = ParamStore::new(0, DType::F64);
        let ln = LayerNorm::new(4, &mut store.scope("ln")).unwrap();
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0, 10.0]], &Device::Cpu).unwrap();
        let y = to_f64_vec(&ln.forward(&x).unwrap()).unwrap();
        let m = y.iter().sum::<f64>() / 4.0;
        let v = y.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-4);
    }

    #[test]
    fn batch_norm_train_updates_running_stats() {
        let mut store = ParamStore::new(0, DType::F64);
        let bn = BatchNorm2d::new(1, &mut store.scope("bn")).unwrap();
        let x = Tensor::new(&[1.0f64, 3.0, 5.0, 7.0], &Device::Cpu)
            .unwrap()
            .reshape((1, 1, 2, 2))
            .unwrap();
        let y = to_f64_vec(&bn.forward_t(&x, true).unwrap()).unwrap();
        assert!(y.iter().sum::<f64>().abs() < 1e-9);
        let rm = to_f64_vec(store.var("bn.running_mean").unwrap()).unwrap();
        let rv = to_f64_vec(store.var("bn.running_var").unwrap()).unwrap();
        assert!((rm[0] - 0.4).abs() < 1e-12);
        // unbiased variance 20/3
        assert!((rv[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_seeded() {
        let x = Tensor::ones((4, 8), DType::F32, &Device::Cpu).unwrap();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = to_f64_vec(&dropout(&x, 0.5, &mut r1).unwrap()).unwrap();
        let b = to_f64_vec(&dropout(&x, 0.5, &mut r2).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
