//! Heterogeneous fleet vehicle routing with vehicle-type selection modeled as
//! prompt tokens in a single autoregressive action space.
//!
//! The crate covers instance generation, the masked decision process, an
//! attention-based policy with its own reverse-mode differentiation, policy
//! gradient training, exact and heuristic baselines, and gap reporting.

pub mod autodiff;
pub mod baselines;
pub mod bench;
pub mod checker;
pub mod env;
pub mod error;
pub mod instance;
pub mod policy;
pub mod solution;
pub mod training;

pub use error::{Error, Result};
