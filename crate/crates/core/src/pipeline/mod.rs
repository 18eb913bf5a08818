//! Training loop, evaluation and the desk-scale experiment presets.

pub mod data;
pub mod optim;
pub mod presets;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::net::NetworkConfig;

pub use data::{sample_batch, synthetic_images, Augment, TrainData};
pub use optim::{adam_step, clip_grad_norm, cosine_lr, AdamParams};
pub use presets::{desk_preset, DeskPreset};
pub use train::{baseline, denoise, eval_pairs, evaluate, train, EvalImage, LogEntry, TrainOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Floor of the cosine schedule.
    pub eta_min: f64,
    pub betas: (f64, f64),
    pub eps_adam: f64,
    pub total_iters: u64,
    /// Halt after this many completed steps without changing the schedule.
    pub stop_at: Option<u64>,
    pub batch: usize,
    pub patch: usize,
    pub seed: u64,
    /// Validation period in steps; 0 disables validation.
    pub eval_every: u64,
    pub log_every: u64,
    /// Checkpoint period in steps; 0 writes only the final state.
    pub checkpoint_every: u64,
    pub augment_rotate: bool,
    pub augment_flip: bool,
    /// Reuse one noise realization for every step.
    pub freeze_noise: bool,
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 2e-4,
            eta_min: 0.0,
            betas: (0.9, 0.999),
            eps_adam: 1e-8,
            total_iters: 700_000,
            stop_at: None,
            batch: 32,
            patch: 128,
            seed: 0,
            eval_every: 0,
            log_every: 100,
            checkpoint_every: 0,
            augment_rotate: true,
            augment_flip: true,
            freeze_noise: false,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn augment(&self) -> Augment {
        Augment { rotate: self.augment_rotate, flip: self.augment_flip }
    }

    pub fn adam(&self, lr: f64) -> AdamParams {
        AdamParams { lr, beta1: self.betas.0, beta2: self.betas.1, eps: self.eps_adam }
    }

    pub fn validate(&self, net: &NetworkConfig) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return config_err(format!("lr0 {} must be positive", self.lr0));
        }
        if !(0.0..=self.lr0).contains(&self.eta_min) {
            return config_err("eta_min must lie in [0, lr0]");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return config_err("Adam betas must lie in [0, 1)");
        }
        if self.batch == 0 {
            return config_err("batch must be at least 1");
        }
        if self.patch == 0 || self.patch % net.size_multiple() != 0 {
            return config_err(format!(
                "patch {} must be a positive multiple of {} (2^stages)",
                self.patch,
                net.size_multiple()
            ));
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return config_err("max_grad_norm must be positive");
            }
        }
        Ok(())
    }
}
