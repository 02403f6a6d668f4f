//! Flat key-value configuration files (TOML syntax, top-level keys only).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneVariant;
use crate::error::{Error, Result};
use crate::training::{ArcFaceConfig, TrainConfig};

/// Parses `text`; unknown keys are rejected by the target type.
pub fn parse_config<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| {
            text[..s.start.min(text.len())].matches('\n').count() + 1
        });
        Error::parse(source, line, e.message().to_string())
    })
}

pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// Training config file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub margin: f64,
    pub scale: f64,
    pub variant: BackboneVariant,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = ArcFaceConfig::new(1);
        Self {
            lr: t.learning_rate,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            margin: a.margin,
            scale: a.scale,
            variant: BackboneVariant::PretrainedFull,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    pub fn arcface(&self, num_classes: usize) -> ArcFaceConfig {
        ArcFaceConfig {
            margin: self.margin,
            scale: self.scale,
            num_classes,
        }
    }
}
