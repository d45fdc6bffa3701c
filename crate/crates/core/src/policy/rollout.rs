//! Autoregressive decoding with the policy network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{current_row, instance_features, status_features};
use super::network::{Bound, DecoderCache, Encoding};
use super::params::ModelParams;
use crate::autodiff::{masked_log_softmax, row_entropies, Matrix, Tape};
use crate::env::{Env, EnvState, Trajectory};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Masked action distribution for one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    /// `-inf` on masked actions.
    pub log_probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    /// Most probable legal action; ties go to the lowest index.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, &lp) in self.log_probs.iter().enumerate() {
            if lp > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF draw from one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = self.greedy();
        for (i, &lp) in self.log_probs.iter().enumerate() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            acc += lp.exp();
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    pub fn entropy(&self) -> f64 {
        self.log_probs
            .iter()
            .filter(|lp| lp.is_finite())
            .map(|&lp| -lp.exp() * lp)
            .sum()
    }
}

/// Everything needed to replay a decision under different parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: usize,
    pub mask: Vec<bool>,
    /// Current-token row of the global embedding.
    pub row: usize,
    pub status: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRollout {
    pub trajectory: Trajectory,
    pub steps: Vec<StepRecord>,
    pub log_prob_sum: f64,
    pub entropy_sum: f64,
}

impl PolicyRollout {
    pub fn cost(&self) -> f64 {
        self.trajectory.cost()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Rejects instances whose fleet width differs from the model's.
pub fn check_compatible(params: &ModelParams, inst: &Instance) -> Result<()> {
    let want = params.config().n_vehicle_types;
    if inst.n_types() != want {
        return Err(Error::Config(format!(
            "model expects {want} vehicle types, instance has {}",
            inst.n_types()
        )));
    }
    Ok(())
}

/// Encoded instance plus cached decoder keys, reusable across rollouts.
pub struct PolicyContext<'m> {
    inst: &'m Instance,
    env: Env<'m>,
    tape: Tape<'m>,
    bound: Bound<'m>,
    encoding: Encoding,
    cache: DecoderCache,
    base_len: usize,
}

impl<'m> PolicyContext<'m> {
    pub fn new(params: &'m ModelParams, inst: &'m Instance) -> Result<Self> {
        check_compatible(params, inst)?;
        let mut tape = Tape::new();
        let bound = Bound::new(params, &mut tape);
        let feats = instance_features(inst);
        let encoding = bound.encode(&mut tape, &feats)?;
        let cache = bound.decoder_cache(&mut tape, &encoding);
        let base_len = tape.len();
        Ok(Self {
            inst,
            env: Env::new(inst),
            tape,
            bound,
            encoding,
            cache,
            base_len,
        })
    }

    pub fn env(&self) -> &Env<'m> {
        &self.env
    }

    /// Final global embedding, `(1+V+N) × d_h`.
    pub fn global_embedding(&self) -> &Matrix {
        self.tape.value(self.encoding.h_g)
    }

    pub fn prompt_embedding(&self) -> &Matrix {
        self.tape.value(self.encoding.c)
    }

    /// Raw pointer scores for one decision, before masking.
    pub fn scores(&mut self, state: &EnvState) -> Matrix {
        let row = current_row(self.inst, state);
        let status = Matrix::row_vector(status_features(self.inst, state));
        let u = self.bound.decode(&mut self.tape, &self.cache, &[row], status);
        let out = self.tape.value(u).clone();
        self.tape.truncate(self.base_len);
        out
    }

    pub fn distribution(&mut self, state: &EnvState, mask: &[bool]) -> Result<ActionDistribution> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract(
                "distribution requested with every action masked".into(),
            ));
        }
        let u = self.scores(state);
        if !u.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite decoder scores at step {}",
                state.step
            )));
        }
        let lp = masked_log_softmax(&u, mask);
        Ok(ActionDistribution {
            log_probs: lp.into_data(),
        })
    }

    /// One episode. `rng` is consulted only in sampling mode, once per
    /// decision.
    pub fn rollout<R: Rng + ?Sized>(&mut self, mode: DecodeMode, rng: &mut R) -> Result<PolicyRollout> {
        let mut steps = Vec::new();
        let (mut lp_sum, mut h_sum) = (0.0, 0.0);
        let env = self.env.clone();
        let mut pending = Vec::new();
        let trajectory = crate::env::run_episode(&env, |state, mask| {
            let dist = self.distribution(state, mask)?;
            let a = match mode {
                DecodeMode::Greedy => dist.greedy(),
                DecodeMode::Sample => dist.sample(rng),
            };
            let m = Matrix::row_vector(dist.log_probs.clone());
            let entropy = row_entropies(&m, mask)[0];
            lp_sum += dist.log_probs[a];
            h_sum += entropy;
            pending.push((state.clone(), mask.to_vec(), a, dist.log_probs[a], entropy));
            Ok(a)
        })?;
        for (state, mask, action, log_prob, entropy) in pending {
            steps.push(StepRecord {
                action,
                mask,
                row: current_row(self.inst, &state),
                status: status_features(self.inst, &state),
                log_prob,
                entropy,
            });
        }
        Ok(PolicyRollout {
            trajectory,
            steps,
            log_prob_sum: lp_sum,
            entropy_sum: h_sum,
        })
    }
}

/// Weighted objective over replayed decisions and its parameter gradient.
#[derive(Debug, Clone)]
pub struct Replay {
    /// `Σ wₜ log π(aₜ) + Σ eₜ H(π(·|sₜ))`.
    pub objective: f64,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    /// One gradient per parameter tensor, in storage order.
    pub grads: Vec<Matrix>,
}

impl<'m> PolicyContext<'m> {
    /// Re-evaluates recorded decisions as one batch on the encoder graph and
    /// differentiates the weighted objective. Rows are evaluated exactly as
    /// during decoding, so replayed values match the recorded ones bitwise.
    pub fn replay(&mut self, steps: &[&StepRecord], pg_weights: &[f64], ent_weights: &[f64]) -> Result<Replay> {
        assert_eq!(steps.len(), pg_weights.len());
        assert_eq!(steps.len(), ent_weights.len());
        let params = self.bound.params;
        if steps.is_empty() {
            return Ok(Replay {
                objective: 0.0,
                log_probs: Vec::new(),
                entropies: Vec::new(),
                grads: params
                    .tensors()
                    .iter()
                    .map(|t| Matrix::zeros(t.value.rows(), t.value.cols()))
                    .collect(),
            });
        }
        let rows: Vec<usize> = steps.iter().map(|s| s.row).collect();
        let status = Matrix::from_rows(&steps.iter().map(|s| s.status.clone()).collect::<Vec<_>>());
        let mask: Vec<bool> = steps.iter().flat_map(|s| s.mask.iter().copied()).collect();
        let actions: Vec<usize> = steps.iter().map(|s| s.action).collect();

        let tape = &mut self.tape;
        let u = self.bound.decode(tape, &self.cache, &rows, status);
        if !tape.value(u).is_finite() {
            tape.truncate(self.base_len);
            return Err(Error::Numeric("non-finite decoder scores during replay".into()));
        }
        let lp = tape.select_log_prob(u, &mask, &actions);
        let h = tape.masked_entropy(u, &mask);
        let a = tape.weighted_sum(lp, pg_weights.to_vec());
        let b = tape.weighted_sum(h, ent_weights.to_vec());
        let total = tape.add(a, b);
        let objective = tape.scalar(total);
        let log_probs = tape.value(lp).data().to_vec();
        let entropies = tape.value(h).data().to_vec();
        let g = tape.backward(total);
        let grads = self
            .bound
            .vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| g.get_or_zeros(v, t.value.shape()))
            .collect();
        tape.truncate(self.base_len);
        Ok(Replay {
            objective,
            log_probs,
            entropies,
            grads,
        })
    }
}

/// Greedy decoding from scratch.
pub fn greedy_rollout(params: &ModelParams, inst: &Instance) -> Result<PolicyRollout> {
    let mut ctx = PolicyContext::new(params, inst)?;
    ctx.rollout(DecodeMode::Greedy, &mut rand::rngs::mock::StepRng::new(0, 0))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::instance::{generate_instance, GeneratorConfig, VariantFlags};
    use crate::policy::ModelConfig;

    fn dist(lp: &[f64]) -> ActionDistribution {
        ActionDistribution { log_probs: lp.to_vec() }
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let ninf = f64::NEG_INFINITY;
        let d = dist(&[ninf, 0.5f64.ln(), 0.5f64.ln()]);
        assert_eq!(d.greedy(), 1);
        assert!((d.entropy() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sampling_never_picks_masked_actions() {
        let ninf = f64::NEG_INFINITY;
        let d = dist(&[ninf, 0.2f64.ln(), ninf, 0.8f64.ln()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[d.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[0] + counts[2], 0);
        assert!((counts[3] as f64 / 10_000.0 - 0.8).abs() < 0.02);
    }

    #[test]
    fn rollouts_terminate_and_record_steps() {
        let params = ModelParams::init(&ModelConfig::small(8, 1, 2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for variant in VariantFlags::BASIC {
            let inst = generate_instance(&GeneratorConfig::new(6, 3, 2, variant, 2)).unwrap();
            let mut ctx = PolicyContext::new(&params, &inst).unwrap();
            for mode in [DecodeMode::Greedy, DecodeMode::Sample] {
                let r = ctx.rollout(mode, &mut rng).unwrap();
                assert_eq!(r.steps.len(), r.trajectory.actions.len());
                assert!(r.log_prob_sum <= 0.0 && r.entropy_sum >= 0.0);
                for s in &r.steps {
                    assert!(s.mask[s.action]);
                }
            }
        }
    }

    #[test]
    fn replay_matches_recorded_values_bitwise() {
        let params = ModelParams::init(&ModelConfig::small(8, 2, 2, 2)).unwrap();
        let inst = generate_instance(&GeneratorConfig::new(7, 3, 2, VariantFlags::TIME_WINDOWS, 4)).unwrap();
        let mut ctx = PolicyContext::new(&params, &inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rolls: Vec<PolicyRollout> = (0..3)
            .map(|_| ctx.rollout(DecodeMode::Sample, &mut rng).unwrap())
            .collect();
        let steps: Vec<&StepRecord> = rolls.iter().flat_map(|r| r.steps.iter()).collect();
        let w = vec![1.0; steps.len()];
        let rep = ctx.replay(&steps, &w, &w).unwrap();
        for (s, (lp, h)) in steps.iter().zip(rep.log_probs.iter().zip(&rep.entropies)) {
            assert_eq!(s.log_prob.to_bits(), lp.to_bits());
            assert_eq!(s.entropy.to_bits(), h.to_bits());
        }
        // The context is reusable after a replay.
        let again = ctx.rollout(DecodeMode::Greedy, &mut rng).unwrap();
        assert_eq!(again, greedy_rollout(&params, &inst).unwrap());
    }

    #[test]
    fn fleet_width_must_match() {
        let params = ModelParams::init(&ModelConfig::small(8, 1, 2, 3)).unwrap();
        let inst = generate_instance(&GeneratorConfig::new(4, 2, 2, VariantFlags::CVRP, 0)).unwrap();
        assert!(matches!(PolicyContext::new(&params, &inst), Err(Error::Config(_))));
    }
}
