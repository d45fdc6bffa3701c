use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{lr_schedule, sigma_schedule, TrainConfig};
use super::loss::{covariance_mask, finish, group_loss, reduce, shared_baseline, Group, Scale};
use super::optim::{clip_global_norm, AdamW};
use crate::error::{Error, Result};
use crate::instance::{generate_instance, GeneratorConfig, Instance};
use crate::policy::{Checkpoint, DecodeMode, ModelConfig, ModelParams, OptimizerState, PolicyContext, PolicyRollout};

/// Seed derivation shared by everything that needs independent streams.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Complete description of a training run, as read from a run file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn check(&self) -> Result<()> {
        self.generator.check()?;
        self.model.check()?;
        self.train.check()?;
        if self.generator.n_vehicle_types != self.model.n_vehicle_types {
            return Err(Error::Config(format!(
                "generator.n_vehicle_types ({}) must equal model.n_vehicle_types ({})",
                self.generator.n_vehicle_types, self.model.n_vehicle_types
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    pub mean_reward: f64,
    /// Mean advantage over all trajectories; zero up to rounding.
    pub mean_advantage: f64,
    pub mean_entropy: f64,
    pub detach_fraction: f64,
    pub infeasible_fraction: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub val_cost: f64,
    pub best_val_cost: f64,
    pub entropy: f64,
    pub detach_fraction: f64,
    pub lr: f64,
    pub sigma: f64,
    pub mean_reward: f64,
    pub infeasible_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub start_val_cost: f64,
    pub best_val_cost: f64,
    pub epochs_completed: usize,
    pub stopped_early: bool,
    pub metrics: Vec<EpochMetrics>,
}

pub struct Trainer {
    run: RunConfig,
    params: ModelParams,
    optimizer: OptimizerState,
    best_params: ModelParams,
    best_val: Option<f64>,
    stale: usize,
    epoch: usize,
    step: u64,
    validation: Vec<Instance>,
    pool: rayon::ThreadPool,
}

fn validation_set(run: &RunConfig) -> Result<Vec<Instance>> {
    (0..run.train.validation_size)
        .map(|i| generate_instance(&run.generator.with_seed(mix_seed(run.train.validation_seed, i as u64))))
        .collect()
}

impl Trainer {
    pub fn new(run: RunConfig) -> Result<Self> {
        run.check()?;
        let params = ModelParams::init(&run.model)?;
        Self::assemble(run, params, None)
    }

    /// Continues from a checkpoint written by this trainer. `best` restores
    /// the best-so-far parameters; without it the resumed parameters stand in.
    pub fn resume(run: RunConfig, ckpt: Checkpoint, best: Option<Checkpoint>) -> Result<Self> {
        run.check()?;
        if ckpt.params.config() != &run.model {
            return Err(Error::Checkpoint(
                "checkpoint model does not match the run configuration".into(),
            ));
        }
        let mut t = Self::assemble(run, ckpt.params, ckpt.optimizer)?;
        t.epoch = ckpt.meta.epoch;
        t.step = ckpt.meta.step;
        t.best_val = ckpt.meta.best_validation;
        t.stale = ckpt.meta.epochs_without_improvement;
        if let Some(b) = best {
            t.best_params = b.params;
        }
        Ok(t)
    }

    fn assemble(run: RunConfig, params: ModelParams, optimizer: Option<OptimizerState>) -> Result<Self> {
        let optimizer = optimizer.unwrap_or_else(|| OptimizerState::zeros_like(&params));
        if optimizer.m.len() != params.tensors().len() {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(run.train.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            validation: validation_set(&run)?,
            best_params: params.clone(),
            run,
            params,
            optimizer,
            best_val: None,
            stale: 0,
            epoch: 0,
            step: 0,
            pool,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn best_params(&self) -> &ModelParams {
        &self.best_params
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn validation(&self) -> &[Instance] {
        &self.validation
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.params.clone());
        c.meta.epoch = self.epoch;
        c.meta.step = self.step;
        c.meta.best_validation = self.best_val;
        c.meta.epochs_without_improvement = self.stale;
        c.optimizer = Some(self.optimizer.clone());
        c
    }

    pub fn best_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.best_params.clone());
        c.meta.epoch = self.epoch;
        c.meta.step = self.step;
        c.meta.best_validation = self.best_val;
        c
    }

    /// Mean greedy cost over the validation set.
    pub fn validation_cost(&self, params: &ModelParams) -> Result<f64> {
        let costs = self.pool.install(|| {
            self.validation
                .par_iter()
                .map(|inst| crate::policy::greedy_rollout(params, inst).map(|r| r.cost()))
                .collect::<Result<Vec<f64>>>()
        })?;
        Ok(costs.iter().sum::<f64>() / costs.len() as f64)
    }

    /// One optimizer update on a freshly generated batch.
    pub fn train_batch(&mut self, sigma: f64) -> Result<BatchStats> {
        let cfg = &self.run.train;
        let batch_seed = mix_seed(cfg.seed, self.step);
        let instances: Vec<Instance> = (0..cfg.batch_size)
            .map(|i| generate_instance(&self.run.generator.with_seed(mix_seed(batch_seed, 2 * i as u64))))
            .collect::<Result<_>>()?;

        let params = &self.params;
        let samples = cfg.samples;
        let work: Vec<(PolicyContext<'_>, Vec<PolicyRollout>)> = self.pool.install(|| {
            instances
                .par_iter()
                .enumerate()
                .map(|(i, inst)| {
                    let mut ctx = PolicyContext::new(params, inst)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(batch_seed, 2 * i as u64 + 1));
                    let rolls = (0..samples)
                        .map(|_| ctx.rollout(DecodeMode::Sample, &mut rng))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((ctx, rolls))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let (mut contexts, rollouts): (Vec<_>, Vec<_>) = work.into_iter().unzip();
        let mut advantages = Vec::with_capacity(rollouts.len());
        let (mut reward_sum, mut adv_sum, mut infeasible, mut n_traj) = (0.0, 0.0, 0usize, 0usize);
        let (mut tok_lp, mut tok_adv) = (Vec::new(), Vec::new());
        for rolls in &rollouts {
            let rewards: Vec<f64> = rolls.iter().map(|r| r.trajectory.total_reward).collect();
            let (_, adv) = shared_baseline(&rewards);
            for (r, &a) in rolls.iter().zip(&adv) {
                reward_sum += r.trajectory.total_reward;
                adv_sum += a;
                infeasible += r.trajectory.infeasible as usize;
                n_traj += 1;
                for s in &r.steps {
                    tok_lp.push(s.log_prob);
                    tok_adv.push(a);
                }
            }
            advantages.push(adv);
        }
        let mut mask_rng = ChaCha8Rng::seed_from_u64(mix_seed(batch_seed, u64::MAX));
        let flat = covariance_mask(
            &tok_lp,
            &tok_adv,
            cfg.threshold,
            cfg.p_detach,
            &mut mask_rng,
            cfg.cov_clamp,
        );
        let mut it = flat.into_iter();
        let detach: Vec<Vec<Vec<bool>>> = rollouts
            .iter()
            .map(|rolls| {
                rolls
                    .iter()
                    .map(|r| (0..r.steps.len()).map(|_| it.next().unwrap()).collect())
                    .collect()
            })
            .collect();

        let groups: Vec<Group<'_>> = instances
            .iter()
            .zip(&rollouts)
            .enumerate()
            .map(|(i, (inst, rolls))| Group {
                instance: inst,
                rollouts: rolls,
                advantages: &advantages[i],
                detach: &detach[i],
            })
            .collect();
        let scale = Scale::of(&groups, sigma);
        let groups_ref = &groups;
        let parts = self.pool.install(|| {
            contexts
                .par_iter_mut()
                .enumerate()
                .map(|(i, ctx)| group_loss(ctx, &groups_ref[i], scale))
                .collect::<Result<Vec<_>>>()
        })?;
        let (loss, grads) = reduce(parts, params);
        let mut out = finish(loss, grads, &groups)?;
        drop(groups);
        drop(contexts);

        let grad_norm = match cfg.grad_clip {
            Some(c) => clip_global_norm(&mut out.grads, c),
            None => super::optim::global_norm(&out.grads),
        };
        let lr = lr_schedule(self.step as usize, cfg);
        let opt = AdamW {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        };
        let mut next = self.params.clone();
        let mut state = self.optimizer.clone();
        opt.step(&mut next, &out.grads, &mut state, lr);
        if !next.all_finite() {
            return Err(Error::Numeric(format!("parameters diverged at step {}", self.step)));
        }
        self.params = next;
        self.optimizer = state;
        self.step += 1;
        Ok(BatchStats {
            loss: out.loss,
            mean_reward: reward_sum / n_traj as f64,
            mean_advantage: adv_sum / n_traj as f64,
            mean_entropy: out.mean_entropy,
            detach_fraction: if out.tokens == 0 {
                0.0
            } else {
                out.detached as f64 / out.tokens as f64
            },
            infeasible_fraction: infeasible as f64 / n_traj as f64,
            grad_norm,
        })
    }

    /// Runs one epoch and validates. Returns the metrics line.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        let sigma = sigma_schedule(epoch, &self.run.train);
        let lr = lr_schedule(self.step as usize, &self.run.train);
        let nb = self.run.train.batches_per_epoch;
        let mut acc = [0.0f64; 6];
        for _ in 0..nb {
            let s = self.train_batch(sigma)?;
            for (a, v) in acc.iter_mut().zip([
                s.loss,
                s.mean_entropy,
                s.detach_fraction,
                s.mean_reward,
                s.infeasible_fraction,
                s.grad_norm,
            ]) {
                *a += v / nb as f64;
            }
        }
        let val = self.validation_cost(&self.params)?;
        if self.best_val.is_none_or(|b| val < b) {
            self.best_val = Some(val);
            self.best_params = self.params.clone();
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch,
            step: self.step,
            loss: acc[0],
            val_cost: val,
            best_val_cost: self.best_val.unwrap_or(val),
            entropy: acc[1],
            detach_fraction: acc[2],
            lr,
            sigma,
            mean_reward: acc[3],
            infeasible_fraction: acc[4],
            grad_norm: acc[5],
        })
    }

    pub fn should_stop(&self) -> bool {
        self.epoch >= self.run.train.epochs || self.run.train.patience.is_some_and(|p| self.stale >= p)
    }

    /// Trains until the epoch budget or patience runs out, calling
    /// `on_epoch` after every epoch.
    pub fn fit(&mut self, mut on_epoch: impl FnMut(&EpochMetrics, &Trainer) -> Result<()>) -> Result<TrainSummary> {
        let start_val_cost = self.validation_cost(&self.params)?;
        if self.best_val.is_none() {
            self.best_val = Some(start_val_cost);
            self.best_params = self.params.clone();
        }
        let mut metrics = Vec::new();
        while !self.should_stop() {
            let m = self.run_epoch()?;
            on_epoch(&m, self)?;
            metrics.push(m);
        }
        Ok(TrainSummary {
            start_val_cost,
            best_val_cost: self.best_val.unwrap_or(start_val_cost),
            epochs_completed: self.epoch,
            stopped_early: self.epoch < self.run.train.epochs,
            metrics,
        })
    }
}

/// File names written by [`train_to_dir`].
pub const FINAL_CKPT: &str = "final.ckpt";
pub const BEST_CKPT: &str = "best.ckpt";
pub const ABORT_CKPT: &str = "abort.ckpt";
pub const METRICS_LOG: &str = "metrics.jsonl";

/// Trains into `out`, writing checkpoints after every epoch and appending
/// one metrics line per epoch. A numeric fault leaves `abort.ckpt` holding
/// the parameters from before the failing update.
pub fn train_to_dir(run: RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    if !out.is_dir() {
        return Err(Error::Config(format!(
            "output directory {} does not exist",
            out.display()
        )));
    }
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let best_path: PathBuf = path.with_file_name(BEST_CKPT);
            let best = if best_path.is_file() && best_path != path {
                Some(Checkpoint::load(&best_path)?)
            } else {
                None
            };
            Trainer::resume(run, ckpt, best)?
        }
        None => Trainer::new(run)?,
    };
    let metrics_path = out.join(METRICS_LOG);
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&metrics_path)?;
    let result = trainer.fit(|m, t| {
        writeln!(log, "{}", serde_json::to_string(m).expect("metrics serialize"))?;
        log.flush()?;
        t.checkpoint().save(&out.join(FINAL_CKPT))?;
        t.best_checkpoint().save(&out.join(BEST_CKPT))?;
        Ok(())
    });
    match result {
        Ok(summary) => {
            trainer.checkpoint().save(&out.join(FINAL_CKPT))?;
            trainer.best_checkpoint().save(&out.join(BEST_CKPT))?;
            Ok(summary)
        }
        Err(e @ Error::Numeric(_)) => {
            trainer.checkpoint().save(&out.join(ABORT_CKPT))?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}
