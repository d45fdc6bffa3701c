//! Attention policy: prompt-conditioned encoder plus multi-view pointer
//! decoder, with greedy and sampled decoding.

mod checkpoint;
mod config;
pub mod features;
mod network;
mod params;
mod rollout;

pub use checkpoint::{Checkpoint, CheckpointMeta, OptimizerState, FORMAT_VERSION};
pub use config::ModelConfig;
pub use features::{current_row, instance_features, status_features, Features};
pub use network::{Bound, DecoderCache, Encoding};
pub use params::{ModelParams, Tensor, VIEWS};
pub use rollout::{
    check_compatible, greedy_rollout, ActionDistribution, DecodeMode, PolicyContext, PolicyRollout, Replay, StepRecord,
};
