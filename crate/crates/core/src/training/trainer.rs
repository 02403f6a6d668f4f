use std::time::Instant;

use candle_core::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arcface::{arcface_logits_batch, cross_entropy, ArcFaceConfig};
use super::augment::{augment, AugmentationPolicy};
use super::optim::{Adam, AdamConfig};
use crate::backbone::{batch_tensor, HybridModel, Init, VariantFlags};
use crate::error::{Error, Result};
use crate::imaging::ModelInput;

/// Name of the class-weight matrix inside the parameter store.
pub const CLASS_WEIGHT_PARAM: &str = "arcface.weight";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            batch_size: 16,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: ModelInput,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,mean_loss,wall_seconds";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.3}",
            self.epoch, self.mean_loss, self.wall_seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
}

fn check_labels(data: &[TrainSample], num_classes: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let mut seen = vec![false; num_classes];
    for (i, s) in data.iter().enumerate() {
        match seen.get_mut(s.label) {
            Some(slot) => *slot = true,
            None => {
                return Err(Error::Dataset(format!(
                    "sample {i} has label {} but there are {num_classes} classes",
                    s.label
                )))
            }
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Dataset(format!(
            "class {missing} has no training samples"
        )));
    }
    Ok(())
}

/// Per-sample augmentation stream, independent of batch composition and of
/// the order in which samples are processed.
fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Class weights for `cfg.num_classes` classes, created in the model's store
/// on first use.
///
/// Rows are normalized inside the loss, so only their direction matters, but
/// their norm sets how far one Adam step turns them. Unit-scale rows turn by
/// roughly the learning rate per step.
pub fn class_weights(model: &mut HybridModel, cfg: &ArcFaceConfig) -> Result<Tensor> {
    let d = model.config().embedding_dim;
    let w = model.store.param(
        CLASS_WEIGHT_PARAM,
        &[cfg.num_classes, d],
        Init::TruncNormal { std: 1.0 },
    )?;
    if w.dims() != [cfg.num_classes, d] {
        return Err(Error::Shape(format!(
            "stored class weights have shape {:?}, expected [{}, {d}]",
            w.dims(),
            cfg.num_classes
        )));
    }
    Ok(w)
}

/// Optimizes the encoder and class weights with the angular-margin loss.
///
/// Samples are reshuffled every epoch; each sample is augmented with its own
/// seeded stream, so runs with the same seed are bit-identical. `on_epoch`
/// is called after every epoch.
pub fn train(
    model: &mut HybridModel,
    data: &[TrainSample],
    train_cfg: &TrainConfig,
    arcface_cfg: &ArcFaceConfig,
    policy: &AugmentationPolicy,
    flags: VariantFlags,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainReport> {
    train_cfg.validate()?;
    arcface_cfg.validate()?;
    policy.validate()?;
    check_labels(data, arcface_cfg.num_classes)?;
    let size = model.config().input_size;
    if let Some(s) = data.iter().find(|s| s.input.size() != size) {
        return Err(Error::Shape(format!(
            "training input of size {} for a {size} encoder",
            s.input.size()
        )));
    }

    let weights = class_weights(model, arcface_cfg)?;
    let vars = model
        .store
        .trainable()
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    let mut opt = Adam::new(
        vars,
        AdamConfig::new(train_cfg.learning_rate, train_cfg.weight_decay),
    )?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed ^ 0xD50F_0C7A_5EED_0001);
    let aug_seed = train_cfg.seed ^ 0xA06E_5EED_0000_0002;
    let dtype = model.store.dtype();

    let mut report = TrainReport {
        epochs: Vec::with_capacity(train_cfg.epochs),
        steps: 0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=train_cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(train_cfg.batch_size) {
            let inputs = batch
                .par_iter()
                .map(|&i| augment(&data[i].input, policy, &mut sample_rng(aug_seed, epoch, i)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ModelInput> = inputs.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].label).collect();
            let x = batch_tensor(&refs, dtype)?;
            let emb = model
                .encoder
                .forward(&x, flags, true, Some(&mut dropout_rng))?;
            let logits = arcface_logits_batch(&emb, &weights, &labels, arcface_cfg)?;
            let loss = cross_entropy(&logits, &labels)?;
            let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::Degenerate(format!(
                    "loss became {value} at epoch {epoch}"
                )));
            }
            loss_sum += value * batch.len() as f64;
            opt.step(&loss.backward()?)?;
            report.steps += 1;
        }
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: mean loss {:.4}", log.mean_loss);
        on_epoch(&log)?;
        report.epochs.push(log);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::HybridEncoderConfig;
    use candle_core::DType;

    fn tiny_cfg() -> HybridEncoderConfig {
        HybridEncoderConfig {
            input_size: 32,
            ..HybridEncoderConfig::tiny()
        }
    }

    fn data(n_classes: usize, per: usize) -> Vec<TrainSample> {
        (0..n_classes * per)
            .map(|i| {
                let label = i % n_classes;
                let plane = (0..32 * 32)
                    .map(|p| {
                        let (x, y) = ((p % 32) as f32, (p / 32) as f32);
                        ((x * (label as f32 + 1.0) * 0.3 + y * 0.1 + i as f32).sin())
                            .clamp(-1.0, 1.0)
                    })
                    .collect();
                TrainSample {
                    input: ModelInput::new(32, plane).unwrap(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn label_validation_happens_before_training() {
        let mut model = HybridModel::new(&tiny_cfg(), 1, DType::F32).unwrap();
        let mut d = data(2, 2);
        d[0].label = 5;
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let r = train(
            &mut model,
            &d,
            &cfg,
            &ArcFaceConfig::new(2),
            &AugmentationPolicy::default(),
            VariantFlags::FULL,
            |_| Ok(()),
        );
        assert!(matches!(r, Err(Error::Dataset(_))));
        assert!(!model.store.contains(CLASS_WEIGHT_PARAM));
        let d = data(2, 2);
        let r = train(
            &mut model,
            &d,
            &cfg,
            &ArcFaceConfig::new(3),
            &AugmentationPolicy::default(),
            VariantFlags::FULL,
            |_| Ok(()),
        );
        assert!(matches!(r, Err(Error::Dataset(_))));
    }

    #[test]
    fn zero_epochs_leaves_parameters_alone() {
        let mut model = HybridModel::new(&tiny_cfg(), 1, DType::F32).unwrap();
        let before: Vec<Vec<f32>> = model
            .store
            .iter()
            .map(|(_, v)| v.as_tensor().flatten_all().unwrap().to_vec1().unwrap())
            .collect();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let r = train(
            &mut model,
            &data(2, 2),
            &cfg,
            &ArcFaceConfig::new(2),
            &AugmentationPolicy::default(),
            VariantFlags::FULL,
            |_| Ok(()),
        )
        .unwrap();
        assert_eq!(r.steps, 0);
        let after: Vec<Vec<f32>> = model
            .store
            .iter()
            .filter(|(n, _)| *n != CLASS_WEIGHT_PARAM)
            .map(|(_, v)| v.as_tensor().flatten_all().unwrap().to_vec1().unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn same_seed_same_parameters() {
        let run = || {
            let mut model = HybridModel::new(&tiny_cfg(), 4, DType::F32).unwrap();
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 3,
                seed: 8,
                learning_rate: 1e-3,
                ..Default::default()
            };
            let r = train(
                &mut model,
                &data(2, 3),
                &cfg,
                &ArcFaceConfig::new(2),
                &AugmentationPolicy::default(),
                VariantFlags::FULL,
                |_| Ok(()),
            )
            .unwrap();
            let params: Vec<Vec<f32>> = model
                .store
                .iter()
                .map(|(_, v)| v.as_tensor().flatten_all().unwrap().to_vec1().unwrap())
                .collect();
            (
                r.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>(),
                params,
                r.steps,
            )
        };
        let (la, pa, sa) = run();
        let (lb, pb, _) = run();
        assert_eq!(la, lb);
        assert_eq!(pa, pb);
        assert_eq!(sa, 4);
    }
}
