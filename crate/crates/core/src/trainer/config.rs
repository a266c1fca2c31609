use serde::{Deserialize, Serialize};

use super::TrainMode;
use crate::augment::{DistortionConfig, DEFAULT_CROP_ASPECT, DEFAULT_CROP_SCALE};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::objectives::DEFAULT_MARGIN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    pub tau: f64,
    /// Key-encoder moving-average coefficient.
    pub theta: f64,
    pub queue_capacity: usize,
    /// Triplet margin (triplet mode only).
    pub margin: f64,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub distortion: DistortionConfig,
    /// Area fraction range of the random resized crop (crop mode only).
    pub crop_scale: (f64, f64),
    pub crop_aspect: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pbcnet,
            epochs: 30,
            batch: 32,
            lr: 0.001,
            sgd_momentum: 0.9,
            weight_decay: 1e-6,
            tau: 0.05,
            theta: 0.999,
            queue_capacity: 512,
            margin: DEFAULT_MARGIN,
            seed: 0,
            encoder: EncoderConfig::default(),
            distortion: DistortionConfig::default(),
            crop_scale: DEFAULT_CROP_SCALE,
            crop_aspect: DEFAULT_CROP_ASPECT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::Argument(format!("batch must be at least 2, got {}", self.batch)));
        }
        if self.epochs < 1 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        let nonneg = [
            ("lr", self.lr),
            ("sgd_momentum", self.sgd_momentum),
            ("weight_decay", self.weight_decay),
            ("margin", self.margin),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Argument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Argument(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        self.encoder.validate()?;
        self.distortion.validate()
    }
}
