use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::greedy::greedy_construct;
use crate::error::Result;
use crate::instance::Instance;
use crate::policy::{DecodeMode, ModelParams, PolicyContext};
use crate::solution::Solution;

/// Best decode among `n` sampled rollouts. Rollout `i` uses the `i`-th seed
/// drawn from `rng`, so a larger `n` with the same generator state samples a
/// superset. Ties keep the earliest rollout; if every rollout dead-ends, the
/// greedy heuristic's solution is returned.
pub fn sample_best<R: Rng + ?Sized>(inst: &Instance, params: &ModelParams, n: usize, rng: &mut R) -> Result<Solution> {
    let seeds: Vec<u64> = (0..n.max(1)).map(|_| rng.gen()).collect();
    // Encoding is deterministic, so per-worker contexts only repeat a check
    // that already passed here.
    drop(PolicyContext::new(params, inst)?);
    let results = seeds
        .par_iter()
        .map_init(
            || PolicyContext::new(params, inst).expect("context built once already"),
            |ctx, &seed| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let roll = ctx.rollout(DecodeMode::Sample, &mut r)?;
                Ok((!roll.trajectory.infeasible).then(|| (roll.cost(), roll.trajectory)))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, crate::env::Trajectory)> = None;
    for (c, t) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, t));
        }
    }
    match best {
        Some((_, t)) => Solution::from_trajectory(&t, inst),
        None => Ok(greedy_construct(inst)),
    }
}
