//! Hybrid local/global encoder.
//!
//! A convolutional trunk produces a spatial feature map that is gated by a
//! learned spatial attention map and average-pooled; a shifted-window
//! transformer produces a global descriptor; both are concatenated and
//! projected to the embedding by a two-layer head.
//!
//! ```text
//! 3×224×224 ─ cnn ─ 1280×7×7 ─ attention ─ pool ─ 1280 ┐
//!           └ swin ────────────────────────────── 768 ┴ concat 2048 ─ head ─ 512
//! ```

mod attention;
pub mod checkpoint;
mod cnn;
mod head;
pub mod layers;
pub mod params;
mod swin;

pub use attention::{global_avg_pool, SpatialAttention};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use cnn::{CnnTrunk, EfficientNetB0, TinyCnn};
pub use head::FusionHead;
pub use params::{Init, ParamStore};
pub use swin::{SwinConfig, SwinEncoder};

pub use candle_core::DType;
use candle_core::{Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ModelInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneVariant {
    /// EfficientNet-B0 + Swin-Tiny at 224×224.
    PretrainedFull,
    /// Scaled-down trunks for desk-scale runs and tests.
    TinyTest,
}

impl std::str::FromStr for BackboneVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained_full" | "full" => Ok(Self::PretrainedFull),
            "tiny_test" | "tiny" => Ok(Self::TinyTest),
            other => Err(Error::Config(format!("unknown backbone variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridEncoderConfig {
    pub variant: BackboneVariant,
    pub input_size: usize,
    pub cnn_channels: usize,
    pub transformer_dim: usize,
    pub embedding_dim: usize,
    pub attention_kernel: usize,
    pub dropout_rate: f64,
    pub hidden_dim: usize,
    /// Exclude both trunks from optimization.
    #[serde(default)]
    pub freeze_backbones: bool,
}

impl HybridEncoderConfig {
    pub fn full() -> Self {
        Self {
            variant: BackboneVariant::PretrainedFull,
            input_size: 224,
            cnn_channels: 1280,
            transformer_dim: 768,
            embedding_dim: 512,
            attention_kernel: 7,
            dropout_rate: 0.5,
            hidden_dim: 1024,
            freeze_backbones: false,
        }
    }

    pub fn tiny() -> Self {
        Self {
            variant: BackboneVariant::TinyTest,
            input_size: 64,
            cnn_channels: 32,
            transformer_dim: 48,
            embedding_dim: 512,
            attention_kernel: 7,
            dropout_rate: 0.5,
            hidden_dim: 256,
            freeze_backbones: false,
        }
    }

    pub fn for_variant(variant: BackboneVariant) -> Self {
        match variant {
            BackboneVariant::PretrainedFull => Self::full(),
            BackboneVariant::TinyTest => Self::tiny(),
        }
    }

    pub fn swin(&self) -> SwinConfig {
        match self.variant {
            BackboneVariant::PretrainedFull => SwinConfig::tiny_224(),
            BackboneVariant::TinyTest => SwinConfig::test_scale(self.transformer_dim),
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.cnn_channels + self.transformer_dim
    }

    /// Spatial size of the CNN feature map.
    pub fn feature_size(&self) -> usize {
        self.input_size / 32
    }

    pub fn validate(&self) -> Result<()> {
        if self.cnn_channels == 0
            || self.transformer_dim == 0
            || self.embedding_dim == 0
            || self.hidden_dim == 0
        {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.attention_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "attention kernel must be odd, got {}",
                self.attention_kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(Error::Config(format!(
                "input size {} must be a positive multiple of 32",
                self.input_size
            )));
        }
        match self.variant {
            BackboneVariant::PretrainedFull => {
                if self.input_size != 224
                    || self.cnn_channels != 1280
                    || self.transformer_dim != 768
                {
                    return Err(Error::Config(
                        "the full backbone is fixed at 224 px input, 1280 CNN channels and 768 transformer dims".into(),
                    ));
                }
            }
            BackboneVariant::TinyTest => {
                if self.transformer_dim % 2 != 0 {
                    return Err(Error::Config("tiny transformer_dim must be even".into()));
                }
            }
        }
        self.swin().validate(self.input_size)
    }
}

/// Which branches participate in [`HybridEncoder::forward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFlags {
    pub use_attention: bool,
    pub use_transformer: bool,
}

impl VariantFlags {
    pub const FULL: Self = Self {
        use_attention: true,
        use_transformer: true,
    };
    pub const CNN_ONLY: Self = Self {
        use_attention: false,
        use_transformer: false,
    };
    pub const CNN_ATTENTION: Self = Self {
        use_attention: true,
        use_transformer: false,
    };
}

impl Default for VariantFlags {
    fn default() -> Self {
        Self::FULL
    }
}

/// Host copy of one sample's `channels × height × width` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (channels, height, width) = t.dims3()?;
        let values = t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn to_tensor(&self, dtype: DType) -> Result<Tensor> {
        Ok(Tensor::from_vec(
            self.values.clone(),
            (self.channels, self.height, self.width),
            &Device::Cpu,
        )?
        .to_dtype(dtype)?)
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.values[(c * self.height + y) * self.width + x]
    }
}

/// Host copy of one sample's `1 × height × width` attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub height: usize,
    pub width: usize,
    pub weights: Vec<f32>,
}

/// A (possibly unnormalized) embedding vector tagged with its sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub sample_id: String,
    pub vector: Vec<f32>,
    pub normalized: bool,
}

impl Embedding {
    pub fn new(sample_id: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            sample_id: sample_id.into(),
            vector,
            normalized: false,
        }
    }

    pub fn norm(&self) -> f64 {
        self.vector
            .iter()
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.vector.iter().all(|v| v.is_finite())
    }

    /// Unit-norm copy; zero vectors are rejected.
    pub fn to_unit(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate(format!(
                "embedding {} has norm {n}",
                self.sample_id
            )));
        }
        Ok(Self {
            sample_id: self.sample_id.clone(),
            vector: self
                .vector
                .iter()
                .map(|&v| (f64::from(v) / n) as f32)
                .collect(),
            normalized: true,
        })
    }
}

/// Stacks model inputs into a `(B, 3, S, S)` tensor.
pub fn batch_tensor(inputs: &[&ModelInput], dtype: DType) -> Result<Tensor> {
    let size = inputs
        .first()
        .map(|i| i.size())
        .ok_or_else(|| Error::Shape("empty input batch".into()))?;
    let mut data = Vec::with_capacity(inputs.len() * 3 * size * size);
    for i in inputs {
        if i.size() != size {
            return Err(Error::Shape(format!(
                "mixed input sizes {size} and {}",
                i.size()
            )));
        }
        data.extend(i.to_chw());
    }
    Ok(Tensor::from_vec(data, (inputs.len(), 3, size, size), &Device::Cpu)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone)]
pub struct HybridEncoder {
    cfg: HybridEncoderConfig,
    cnn: CnnTrunk,
    attention: SpatialAttention,
    swin: SwinEncoder,
    head: FusionHead,
    dtype: DType,
}

impl HybridEncoder {
    /// Builds the encoder, creating any parameter not already in `store`.
    ///
    /// Parameters live under `cnn.`, `attention.`, `swin.` and `head.`.
    pub fn new(cfg: &HybridEncoderConfig, store: &mut ParamStore) -> Result<Self> {
        cfg.validate()?;
        let cnn = match cfg.variant {
            BackboneVariant::PretrainedFull => CnnTrunk::EfficientNet(EfficientNetB0::new(
                cfg.cnn_channels,
                &mut store.scope("cnn"),
            )?),
            BackboneVariant::TinyTest => {
                CnnTrunk::Tiny(TinyCnn::new(cfg.cnn_channels, &mut store.scope("cnn"))?)
            }
        };
        let attention = SpatialAttention::new(cfg.attention_kernel, &mut store.scope("attention"))?;
        let swin = SwinEncoder::new(&cfg.swin(), cfg.input_size, &mut store.scope("swin"))?;
        let head = FusionHead::new(
            cfg.fused_dim(),
            cfg.hidden_dim,
            cfg.embedding_dim,
            cfg.dropout_rate,
            &mut store.scope("head"),
        )?;
        if cfg.freeze_backbones {
            store.freeze_prefix("cnn.");
            store.freeze_prefix("swin.");
        }
        Ok(Self {
            cfg: cfg.clone(),
            cnn,
            attention,
            swin,
            head,
            dtype: store.dtype(),
        })
    }

    pub fn config(&self) -> &HybridEncoderConfig {
        &self.cfg
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = self.cfg.input_size;
        match x.dims() {
            [_, 3, h, w] if *h == s && *w == s => Ok(()),
            dims => Err(Error::Shape(format!(
                "expected (B, 3, {s}, {s}) input, got {dims:?}"
            ))),
        }
    }

    /// `(B, 3, S, S)` → `(B, cnn_channels, S/32, S/32)`.
    pub fn cnn_features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.check_input(x)?;
        self.cnn.forward_t(x, train)
    }

    /// Returns `(gated, attention_map)`.
    pub fn spatial_attention(&self, fmap: &Tensor) -> Result<(Tensor, Tensor)> {
        self.attention.forward(fmap)
    }

    pub fn attention_logits(&self, fmap: &Tensor) -> Result<Tensor> {
        self.attention.logits(fmap)
    }

    pub fn pool_local(&self, gated: &Tensor) -> Result<Tensor> {
        global_avg_pool(gated)
    }

    /// `(B, 3, S, S)` → `(B, transformer_dim)`.
    pub fn transformer_features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.swin.forward(x)
    }

    /// Concatenates both descriptors and projects to `(B, embedding_dim)`.
    /// Dropout is active only when `dropout_rng` is given.
    pub fn fuse_and_project<R: Rng>(
        &self,
        local: &Tensor,
        global: &Tensor,
        dropout_rng: Option<&mut R>,
    ) -> Result<Tensor> {
        let (bl, cl) = local.dims2()?;
        let (bg, cg) = global.dims2()?;
        if bl != bg || cl != self.cfg.cnn_channels || cg != self.cfg.transformer_dim {
            return Err(Error::Shape(format!(
                "fusion expects ({bl}, {}) and ({bl}, {}), got ({bl}, {cl}) and ({bg}, {cg})",
                self.cfg.cnn_channels, self.cfg.transformer_dim
            )));
        }
        let fused = Tensor::cat(&[local, global], 1)?;
        self.head.forward(&fused, dropout_rng)
    }

    /// Full forward pass under the ablation `flags`.
    ///
    /// Without attention the CNN map is pooled directly; without the
    /// transformer a zero vector of `transformer_dim` takes its place.
    pub fn forward<R: Rng>(
        &self,
        x: &Tensor,
        flags: VariantFlags,
        train: bool,
        dropout_rng: Option<&mut R>,
    ) -> Result<Tensor> {
        let fmap = self.cnn_features(x, train)?;
        let local = if flags.use_attention {
            self.pool_local(&self.spatial_attention(&fmap)?.0)?
        } else {
            self.pool_local(&fmap)?
        };
        let global = if flags.use_transformer {
            self.transformer_features(x)?
        } else {
            Tensor::zeros(
                (x.dim(0)?, self.cfg.transformer_dim),
                self.dtype,
                x.device(),
            )?
        };
        self.fuse_and_project(&local, &global, dropout_rng)
    }

    /// Inference embeddings for a batch of inputs, in input order.
    pub fn embed(
        &self,
        inputs: &[&ModelInput],
        ids: &[&str],
        flags: VariantFlags,
    ) -> Result<Vec<Embedding>> {
        if inputs.len() != ids.len() {
            return Err(Error::Shape("inputs and ids differ in length".into()));
        }
        let x = batch_tensor(inputs, self.dtype)?;
        let out = self
            .forward(&x, flags, false, None::<&mut rand_chacha::ChaCha8Rng>)?
            .to_dtype(DType::F32)?
            .to_vec2::<f32>()?;
        Ok(out
            .into_iter()
            .zip(ids)
            .map(|(v, id)| Embedding::new(*id, v))
            .collect())
    }

    /// Single-sample inference.
    pub fn encode(
        &self,
        input: &ModelInput,
        sample_id: &str,
        flags: VariantFlags,
    ) -> Result<Embedding> {
        Ok(self.embed(&[input], &[sample_id], flags)?.remove(0))
    }
}

/// An encoder together with the parameter store that backs it.
#[derive(Debug)]
pub struct HybridModel {
    pub store: ParamStore,
    pub encoder: HybridEncoder,
}

impl HybridModel {
    pub fn new(cfg: &HybridEncoderConfig, seed: u64, dtype: DType) -> Result<Self> {
        let mut store = ParamStore::new(seed, dtype);
        let encoder = HybridEncoder::new(cfg, &mut store)?;
        Ok(Self { store, encoder })
    }

    pub fn config(&self) -> &HybridEncoderConfig {
        self.encoder.config()
    }

    /// Restores parameters from a checkpoint directory, then builds the
    /// encoder on top of them.
    pub fn from_checkpoint(dir: impl AsRef<std::path::Path>) -> Result<(Self, CheckpointMeta)> {
        let (store, meta) = load_checkpoint(dir, DType::F32)?;
        let mut store = store;
        let encoder = HybridEncoder::new(&meta.config, &mut store)?;
        Ok((Self { store, encoder }, meta))
    }
}
