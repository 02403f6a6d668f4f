//! Additive angular margin logits and their cross-entropy loss.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::backbone::Embedding;
use crate::error::{Error, Result};

/// Floor on `sin²θ`, keeping `d sin / d cos` finite when the embedding is
/// parallel to a class weight.
const SIN2_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcFaceConfig {
    /// Additive angular margin in radians.
    pub margin: f64,
    pub scale: f64,
    pub num_classes: usize,
}

impl ArcFaceConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            margin: 0.5,
            scale: 64.0,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..std::f64::consts::PI).contains(&self.margin) {
            return Err(Error::Config(format!(
                "margin {} outside [0, π)",
                self.margin
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        Ok(())
    }
}

fn l2_normalize_rows(x: &Tensor, what: &str) -> Result<Tensor> {
    let norms = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    let min = norms
        .flatten_all()?
        .to_dtype(DType::F64)?
        .min(0)?
        .to_scalar::<f64>()?;
    if !(min > 0.0) || !min.is_finite() {
        return Err(Error::Degenerate(format!(
            "{what} has a zero-norm or non-finite row"
        )));
    }
    Ok(x.broadcast_div(&norms)?)
}

/// Margin-adjusted, scaled logits for a batch.
///
/// `embeddings` is (B, D), `class_weights` is (C, D); both are row-normalized
/// here. For the labelled class the logit is `s·cos(θ + m)`, computed as
/// `cos θ cos m − sin θ sin m`; where `θ + m` would pass π the monotone
/// surrogate `cos θ − m sin m` is used instead. Other classes get `s·cos θ`.
pub fn arcface_logits_batch(
    embeddings: &Tensor,
    class_weights: &Tensor,
    labels: &[usize],
    cfg: &ArcFaceConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let (b, d) = embeddings.dims2()?;
    let (c, dw) = class_weights.dims2()?;
    if d != dw {
        return Err(Error::Shape(format!(
            "embedding dim {d} vs class weight dim {dw}"
        )));
    }
    if c != cfg.num_classes {
        return Err(Error::Shape(format!(
            "{c} class weight rows for {} classes",
            cfg.num_classes
        )));
    }
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Dataset(format!(
            "label {l} out of range for {c} classes"
        )));
    }
    let dtype = embeddings.dtype();
    let e = l2_normalize_rows(embeddings, "embedding batch")?;
    let w = l2_normalize_rows(class_weights, "class weights")?;
    let cos = e.matmul(&w.t()?)?.clamp(-1.0, 1.0)?;
    let sin = (1.0 - cos.sqr()?)?.clamp(SIN2_FLOOR, 1.0)?.sqrt()?;
    let (sin_m, cos_m) = cfg.margin.sin_cos();
    let phi = ((&cos * cos_m)? - (&sin * sin_m)?)?;
    let surrogate = (&cos - cfg.margin * sin_m)?;
    // θ + m > π  ⇔  cos θ < cos(π − m) = −cos m
    let past_pi = cos.lt(-cos_m)?.to_dtype(dtype)?;
    let target = ((&past_pi * &surrogate)? + ((1.0 - &past_pi)? * &phi)?)?;
    let one_hot = one_hot(labels, c, dtype, embeddings.device())?;
    let mixed = ((&one_hot * &target)? + ((1.0 - &one_hot)? * &cos)?)?;
    Ok((mixed * cfg.scale)?)
}

fn one_hot(labels: &[usize], classes: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut v = vec![0f64; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        v[i * classes + l] = 1.0;
    }
    Ok(Tensor::from_vec(v, (labels.len(), classes), device)?.to_dtype(dtype)?)
}

/// Mean softmax cross-entropy of `(B, C)` logits against `labels`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, c) = logits.dims2()?;
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Dataset(format!(
            "label {l} out of range for {c} classes"
        )));
    }
    let log_p = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let idx: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
    let idx = Tensor::from_vec(idx, (b, 1), logits.device())?;
    let picked = log_p.gather(&idx, 1)?;
    Ok(picked.mean_all()?.neg()?)
}

/// Logits of a single embedding, evaluated in double precision.
pub fn arcface_logits(
    embedding: &Embedding,
    label: usize,
    class_weights: &[Vec<f32>],
    cfg: &ArcFaceConfig,
) -> Result<Vec<f64>> {
    if !embedding.is_finite() {
        return Err(Error::Degenerate(format!(
            "embedding {} is not finite",
            embedding.sample_id
        )));
    }
    let d = embedding.vector.len();
    let e =
        Tensor::from_vec(embedding.vector.clone(), (1, d), &Device::Cpu)?.to_dtype(DType::F64)?;
    let rows: Vec<f32> = class_weights.iter().flatten().copied().collect();
    if rows.len() != class_weights.len() * d {
        return Err(Error::Shape(
            "class weight rows must match the embedding length".into(),
        ));
    }
    let w = Tensor::from_vec(rows, (class_weights.len(), d), &Device::Cpu)?.to_dtype(DType::F64)?;
    let logits = arcface_logits_batch(&e, &w, &[label], cfg)?;
    Ok(logits.squeeze(0)?.to_vec1::<f64>()?)
}

/// Mean cross-entropy over rows of precomputed logits.
pub fn arcface_loss(logits_batch: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let c = logits_batch.first().map_or(0, Vec::len);
    if logits_batch.iter().any(|r| r.len() != c) {
        return Err(Error::Shape("logit rows differ in length".into()));
    }
    let flat: Vec<f64> = logits_batch.iter().flatten().copied().collect();
    let t = Tensor::from_vec(flat, (logits_batch.len(), c), &Device::Cpu)?;
    Ok(cross_entropy(&t, labels)?.to_scalar::<f64>()?)
}
