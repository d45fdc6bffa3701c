//! Shared-baseline policy gradient with an entropy bonus and
//! covariance-guided gradient blocking.
//!
//! Sign convention: the returned loss is minimized, so it is the negated
//! objective `(1/(B·S)) Σ A Σₜ log π̃(aₜ) + σ·H`.

use rand::Rng;
use rayon::prelude::*;

use super::config::Threshold;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::policy::{ModelParams, PolicyContext, PolicyRollout, StepRecord};

/// Mean reward and centered advantages.
pub fn shared_baseline(rewards: &[f64]) -> (f64, Vec<f64>) {
    if rewards.is_empty() {
        return (0.0, Vec::new());
    }
    let b = rewards.iter().sum::<f64>() / rewards.len() as f64;
    (b, rewards.iter().map(|r| r - b).collect())
}

/// Centered product of `log π(aᵢ)` and `π(aᵢ)·Aᵢ` over the token population.
pub fn covariance_scores(log_probs: &[f64], advantages: &[f64]) -> Vec<f64> {
    assert_eq!(log_probs.len(), advantages.len(), "token arrays must align");
    let n = log_probs.len();
    if n == 0 {
        return Vec::new();
    }
    let weighted: Vec<f64> = log_probs.iter().zip(advantages).map(|(lp, a)| lp.exp() * a).collect();
    let mean_lp = log_probs.iter().sum::<f64>() / n as f64;
    let mean_w = weighted.iter().sum::<f64>() / n as f64;
    log_probs
        .iter()
        .zip(&weighted)
        .map(|(lp, w)| (lp - mean_lp) * (w - mean_w))
        .collect()
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Tokens whose gradient is blocked. A token is a candidate when its score
/// lies inside `clamp` and its clamped score reaches the threshold; each
/// candidate is then blocked with probability `p_detach`. One uniform draw is
/// consumed per token regardless of the outcome.
pub fn covariance_mask<R: Rng + ?Sized>(
    log_probs: &[f64],
    advantages: &[f64],
    threshold: Threshold,
    p_detach: f64,
    rng: &mut R,
    clamp: Option<[f64; 2]>,
) -> Vec<bool> {
    let scores = covariance_scores(log_probs, advantages);
    if scores.is_empty() {
        return Vec::new();
    }
    let clamped: Vec<f64> = match clamp {
        Some([lo, hi]) => scores.iter().map(|c| c.clamp(lo, hi)).collect(),
        None => scores.clone(),
    };
    let eta = match threshold {
        Threshold::Absolute(e) => e,
        Threshold::Quantile(q) => quantile(&clamped, q),
    };
    scores
        .iter()
        .zip(&clamped)
        .map(|(&raw, &c)| {
            let alpha: f64 = rng.gen();
            let in_range = clamp.is_none_or(|[lo, hi]| raw >= lo && raw <= hi);
            in_range && c >= eta && alpha < p_detach
        })
        .collect()
}

/// Sampled trajectories of one instance with their advantages and
/// per-step detach flags.
#[derive(Debug, Clone, Copy)]
pub struct Group<'a> {
    pub instance: &'a Instance,
    pub rollouts: &'a [PolicyRollout],
    pub advantages: &'a [f64],
    /// `detach[s][t]` blocks step `t` of rollout `s`.
    pub detach: &'a [Vec<bool>],
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient of `loss`, one matrix per parameter tensor.
    pub grads: Vec<Matrix>,
    pub mean_entropy: f64,
    pub tokens: usize,
    pub detached: usize,
}

/// Weights for the loss terms of one batch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scale {
    /// `1/(B·S)`.
    pub pg: f64,
    /// `σ / T` with `T` the batch's token count.
    pub entropy: f64,
}

impl Scale {
    pub fn of(groups: &[Group<'_>], sigma: f64) -> Self {
        let trajectories: usize = groups.iter().map(|g| g.rollouts.len()).sum();
        let tokens: usize = groups
            .iter()
            .flat_map(|g| g.rollouts.iter())
            .map(|r| r.steps.len())
            .sum();
        Self {
            pg: 1.0 / trajectories.max(1) as f64,
            entropy: if tokens == 0 { 0.0 } else { sigma / tokens as f64 },
        }
    }
}

/// Loss and gradient contributed by one group, evaluated on `ctx`, which
/// must be the context of `group.instance`. Blocked tokens enter the loss
/// value through their recorded log-probabilities and entropies only.
pub(crate) fn group_loss(ctx: &mut PolicyContext<'_>, group: &Group<'_>, scale: Scale) -> Result<(f64, Vec<Matrix>)> {
    let mut live: Vec<&StepRecord> = Vec::new();
    let mut pg_w = Vec::new();
    let mut ent_w = Vec::new();
    let mut frozen = 0.0;
    for (s, roll) in group.rollouts.iter().enumerate() {
        let a = group.advantages[s];
        for (t, step) in roll.steps.iter().enumerate() {
            let w_pg = scale.pg * a;
            if group.detach[s][t] {
                frozen += w_pg * step.log_prob + scale.entropy * step.entropy;
            } else {
                live.push(step);
                pg_w.push(w_pg);
                ent_w.push(scale.entropy);
            }
        }
    }
    let mut rep = ctx.replay(&live, &pg_w, &ent_w)?;
    for g in &mut rep.grads {
        g.scale_in_place(-1.0);
    }
    Ok((-(rep.objective + frozen), rep.grads))
}

fn check_group(group: &Group<'_>) -> Result<()> {
    if group.advantages.len() != group.rollouts.len() || group.detach.len() != group.rollouts.len() {
        return Err(Error::Contract("one advantage and one detach row per rollout".into()));
    }
    for (r, d) in group.rollouts.iter().zip(group.detach) {
        if r.steps.len() != d.len() {
            return Err(Error::Contract("one detach flag per recorded step".into()));
        }
    }
    Ok(())
}

/// Sums per-group results in group order, independent of scheduling.
pub(crate) fn reduce(parts: Vec<(f64, Vec<Matrix>)>, params: &ModelParams) -> (f64, Vec<Matrix>) {
    let mut grads: Vec<Matrix> = params
        .tensors()
        .iter()
        .map(|t| Matrix::zeros(t.value.rows(), t.value.cols()))
        .collect();
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    (loss, grads)
}

/// Batch loss and gradient, re-encoding every instance.
pub fn policy_gradient_loss(params: &ModelParams, groups: &[Group<'_>], sigma: f64) -> Result<LossOutput> {
    for g in groups {
        check_group(g)?;
    }
    let scale = Scale::of(groups, sigma);
    let parts = groups
        .par_iter()
        .map(|g| {
            let mut ctx = PolicyContext::new(params, g.instance)?;
            group_loss(&mut ctx, g, scale)
        })
        .collect::<Result<Vec<_>>>()?;
    let (loss, grads) = reduce(parts, params);
    finish(loss, grads, groups)
}

pub(crate) fn finish(loss: f64, grads: Vec<Matrix>, groups: &[Group<'_>]) -> Result<LossOutput> {
    let steps = groups
        .iter()
        .flat_map(|g| g.rollouts.iter())
        .flat_map(|r| r.steps.iter());
    let (mut tokens, mut h) = (0usize, 0.0);
    for s in steps {
        tokens += 1;
        h += s.entropy;
    }
    let detached = groups
        .iter()
        .flat_map(|g| g.detach.iter())
        .map(|d| d.iter().filter(|&&x| x).count())
        .sum();
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite loss or gradient (loss {loss}, {tokens} tokens, {detached} detached)"
        )));
    }
    Ok(LossOutput {
        loss,
        grads,
        mean_entropy: if tokens == 0 { 0.0 } else { h / tokens as f64 },
        tokens,
        detached,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn baseline_examples() {
        let (b, a) = shared_baseline(&[-2.0, -4.0]);
        assert_eq!(b, -3.0);
        assert_eq!(a, vec![1.0, -1.0]);
        let (_, a) = shared_baseline(&[-1.5; 4]);
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0, 5.0], 0.5), 3.0);
        assert!((quantile(&[0.0, 1.0], 0.8) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn mask_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lp: Vec<f64> = (0..50).map(|i| -(i as f64) / 10.0).collect();
        let adv: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) * 3.0).collect();
        let m = covariance_mask(&lp, &adv, Threshold::Quantile(0.8), 0.0, &mut rng, Some([0.1, 5.0]));
        assert!(m.iter().all(|&x| !x));
        let m = covariance_mask(&lp, &adv, Threshold::Absolute(5.5), 1.0, &mut rng, Some([0.1, 5.0]));
        assert!(m.iter().all(|&x| !x));
        assert!(covariance_mask(&[], &[], Threshold::Quantile(0.8), 0.5, &mut rng, None).is_empty());
    }

    #[test]
    fn mask_rate_among_candidates_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let lp: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>() * 3.0).collect();
        let adv: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 8.0 - 4.0).collect();
        let m = covariance_mask(&lp, &adv, Threshold::Absolute(f64::NEG_INFINITY), 0.15, &mut rng, None);
        let rate = m.iter().filter(|&&x| x).count() as f64 / n as f64;
        assert!((rate - 0.15).abs() < 0.01, "{rate}");
    }
}
