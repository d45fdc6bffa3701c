//! Reference solvers: exact search, greedy construction, random rollouts and
//! best-of-n policy sampling.

mod greedy;
mod oracle;
mod sampling;

pub use greedy::{greedy_construct, greedy_trajectory, random_rollout};
pub use oracle::{
    check_oracle_size, enumerate_trajectories, exhaustive_solve, OracleResult, MAX_ORACLE_CUSTOMERS, MAX_ORACLE_FLEET,
};
pub use sampling::sample_best;
