use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the covariance threshold is chosen for each batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Threshold {
    /// Quantile in `[0, 1]` of the batch's clamped scores.
    Quantile(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// Instances per batch.
    pub batch_size: usize,
    /// Sampled trajectories per instance.
    pub samples: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    pub sigma0: f64,
    /// Fraction of epochs trained at `sigma0` before the linear decay.
    pub sigma_hold: f64,
    /// Range of covariance scores eligible for detaching; `None` disables the
    /// range restriction and the clamp.
    pub cov_clamp: Option<[f64; 2]>,
    pub threshold: Threshold,
    pub p_detach: f64,
    pub validation_size: usize,
    pub validation_seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: Option<usize>,
    pub seed: u64,
    /// Worker threads for rollouts and gradients; `1` is fully sequential.
    /// Results do not depend on this value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batches_per_epoch: 40,
            batch_size: 32,
            samples: 16,
            lr_start: 3e-4,
            lr_end: 2e-4,
            warmup_steps: 20,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: Some(1.0),
            sigma0: 0.03,
            sigma_hold: 0.4,
            cov_clamp: Some([0.1, 5.0]),
            threshold: Threshold::Quantile(0.8),
            p_detach: 0.15,
            validation_size: 64,
            validation_seed: 1_000_003,
            patience: Some(20),
            seed: 0,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.samples < 2 {
            return bad("samples must be at least 2 for the shared baseline");
        }
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 {
            return bad("epochs, batches_per_epoch and batch_size must be positive");
        }
        if !(self.lr_end <= self.lr_start && self.lr_end >= 0.0) {
            return bad("learning rates must satisfy 0 <= lr_end <= lr_start");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.weight_decay < 0.0 || self.sigma0 < 0.0 {
            return bad("weight_decay and sigma0 must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.sigma_hold) || !(0.0..=1.0).contains(&self.p_detach) {
            return bad("sigma_hold and p_detach must lie in [0, 1]");
        }
        if let Some([lo, hi]) = self.cov_clamp {
            if !(lo <= hi) {
                return bad("cov_clamp must be an ordered pair");
            }
        }
        if let Threshold::Quantile(q) = self.threshold {
            if !(0.0..=1.0).contains(&q) {
                return bad("threshold quantile must lie in [0, 1]");
            }
        }
        if matches!(self.grad_clip, Some(c) if c <= 0.0) {
            return bad("grad_clip must be positive");
        }
        if self.validation_size == 0 {
            return bad("validation_size must be positive");
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }
}

/// Linear warmup from zero to `lr_start`, then cosine annealing to `lr_end`
/// at the last step of the run.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_steps;
    if step < w {
        return cfg.lr_start * step as f64 / w as f64;
    }
    let last = cfg.total_steps().saturating_sub(1);
    if last <= w {
        return cfg.lr_start;
    }
    let progress = ((step - w) as f64 / (last - w) as f64).min(1.0);
    cfg.lr_end + 0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Entropy coefficient for a zero-based epoch: constant for the first
/// `ceil(sigma_hold · epochs)` epochs, then linear down to zero at the final
/// epoch.
pub fn sigma_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let e = cfg.epochs;
    let hold = (cfg.sigma_hold * e as f64).ceil() as usize;
    if epoch < hold {
        return cfg.sigma0;
    }
    if e <= hold {
        return 0.0;
    }
    let done = (epoch + 1 - hold) as f64 / (e - hold) as f64;
    cfg.sigma0 * (1.0 - done).max(0.0)
}
