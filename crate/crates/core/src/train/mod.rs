//! Optimizer loop, learning-rate schedule, checkpointing and the ablation
//! harness.

mod ablate;
mod optim;
mod trainer;

pub use ablate::{ablate, AblationRow, Variant};
pub use optim::{decay_exempt, AdamW};
pub use trainer::{
    dataset_loss, prepare_sample, prepare_samples, train, EpochLog, Trainer, TrainingSample,
};

use serde::{Deserialize, Serialize};

use crate::error::{IaError, Result};
use crate::model::Component;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Components switched off for this run.
    pub ablation: Vec<Component>,
    /// Gaussian width of the target heatmaps in pixels; `None` scales with image width.
    pub sigma: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            epochs: 80,
            lr_decay_every: 20,
            lr_decay_factor: 10.0,
            batch_size: 16,
            seed: 0,
            ablation: Vec::new(),
            sigma: None,
        }
    }
}

impl TrainConfig {
    /// Defaults with the desk-scale batch size.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IaError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr_decay_factor > 1.0) {
            return bad(format!(
                "lr_decay_factor must exceed 1, got {}",
                self.lr_decay_factor
            ));
        }
        if self.lr_decay_every == 0 || self.batch_size == 0 {
            return bad("lr_decay_every and batch_size must be at least 1".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight_decay non-negative".into());
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }

    /// `lr / factor^floor(epoch / every)` for a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.lr_decay_every) as i32;
        self.lr / self.lr_decay_factor.powi(k)
    }
}

#[cfg(test)]
mod tests;
