//! Policy-gradient training with a per-instance shared baseline.

mod config;
mod loss;
mod optim;
mod trainer;

pub use config::{lr_schedule, sigma_schedule, Threshold, TrainConfig};
pub use loss::{
    covariance_mask, covariance_scores, policy_gradient_loss, quantile, shared_baseline, Group, LossOutput,
};
pub use optim::{clip_global_norm, global_norm, AdamW};
pub use trainer::{
    mix_seed, train_to_dir, BatchStats, EpochMetrics, RunConfig, TrainSummary, Trainer, ABORT_CKPT, BEST_CKPT,
    FINAL_CKPT, METRICS_LOG,
};
