//! Minimal reverse-mode automatic differentiation for the policy network.

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{masked_log_softmax, row_entropies, Gradients, Tape, Var};
