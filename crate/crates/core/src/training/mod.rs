//! Angular-margin training: logits and loss, input augmentation, the
//! optimizer and the epoch loop.

mod arcface;
mod augment;
mod optim;
mod trainer;

pub use arcface::{
    arcface_logits, arcface_logits_batch, arcface_loss, cross_entropy, ArcFaceConfig,
};
pub use augment::{augment, hflip, rotate, AugmentationPolicy};
pub use optim::{Adam, AdamConfig};
pub use trainer::{
    class_weights, train, EpochLog, TrainConfig, TrainReport, TrainSample, CLASS_WEIGHT_PARAM,
};
