use candle_core::Tensor;
use rand::Rng;

use super::layers::{dropout, Linear};
use super::params::{Init, Scope};
use crate::error::Result;

/// Two-layer projection: linear → ReLU → dropout → linear.
#[derive(Debug, Clone)]
pub struct FusionHead {
    fc1: Linear,
    fc2: Linear,
    dropout: f64,
}

impl FusionHead {
    pub fn new(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        dropout: f64,
        s: &mut Scope,
    ) -> Result<Self> {
        let init = Init::TruncNormal { std: 0.02 };
        Ok(Self {
            fc1: Linear::new(in_dim, hidden, true, init, &mut s.pp("fc1"))?,
            fc2: Linear::new(hidden, out_dim, true, init, &mut s.pp("fc2"))?,
            dropout,
        })
    }

    /// Dropout is applied only when an RNG is supplied.
    pub fn forward<R: Rng>(&self, x: &Tensor, dropout_rng: Option<&mut R>) -> Result<Tensor> {
        let mut h = self.fc1.forward(x)?.relu()?;
        if let Some(rng) = dropout_rng {
            h = dropout(&h, self.dropout, rng)?;
        }
        self.fc2.forward(&h)
    }
}
