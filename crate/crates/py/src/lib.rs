//! Python bindings: instances, the decision process, solvers, policies and
//! training.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use routing::baselines::{exhaustive_solve, greedy_construct, sample_best};
use routing::checker::check_feasibility;
use routing::env::{Action, Env as CoreEnv, EnvState};
use routing::instance::{generate_instance, validate_instance, GeneratorConfig, VariantFlags};
use routing::policy::{greedy_rollout, Checkpoint, ModelConfig, ModelParams};
use routing::training::{train_to_dir, RunConfig};

fn err(e: routing::Error) -> PyErr {
    match e {
        routing::Error::Config(_)
        | routing::Error::Parse { .. }
        | routing::Error::Contract(_)
        | routing::Error::SizeGuard(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(frozen, skip_from_py_object, module = "vap")]
#[derive(Clone)]
struct Instance {
    inner: routing::instance::Instance,
}

#[pymethods]
impl Instance {
    /// Samples an instance from the synthetic distribution.
    #[staticmethod]
    #[pyo3(signature = (n_customers, fleet_size, n_vehicle_types=3, variant="c", seed=0))]
    fn generate(
        n_customers: usize,
        fleet_size: u32,
        n_vehicle_types: usize,
        variant: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let variant = VariantFlags::parse(variant).map_err(err)?;
        let cfg = GeneratorConfig::new(n_customers, fleet_size, n_vehicle_types, variant, seed);
        Ok(Self {
            inner: generate_instance(&cfg).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: routing::instance::Instance::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: routing::instance::Instance::load(Path::new(path)).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_customers(&self) -> usize {
        self.inner.n_customers()
    }

    #[getter]
    fn n_types(&self) -> usize {
        self.inner.n_types()
    }

    #[getter]
    fn fleet_size(&self) -> u32 {
        self.inner.fleet_size()
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.to_string()
    }

    /// Structural problems with the instance, as messages.
    fn validate(&self) -> Vec<String> {
        validate_instance(&self.inner).iter().map(ToString::to_string).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(variant='{}', n_customers={}, fleet_size={}, n_types={})",
            self.inner.variant,
            self.inner.n_customers(),
            self.inner.fleet_size(),
            self.inner.n_types()
        )
    }
}

#[pyclass(frozen, skip_from_py_object, module = "vap")]
#[derive(Clone)]
struct Solution {
    inner: routing::solution::Solution,
}

#[pymethods]
impl Solution {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: routing::solution::Solution::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn feasible(&self) -> bool {
        self.inner.feasible
    }

    /// `(vehicle_type, customers, closed)` per route.
    #[getter]
    fn routes(&self) -> Vec<(usize, Vec<usize>, bool)> {
        self.inner
            .routes
            .iter()
            .map(|r| (r.vehicle_type, r.customers.clone(), r.closed))
            .collect()
    }

    /// Constraint violations against `instance`; empty when feasible.
    fn check(&self, instance: &Instance) -> Vec<String> {
        check_feasibility(&self.inner, &instance.inner)
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    /// Objective recomputed from the routes.
    fn cost(&self, instance: &Instance) -> PyResult<f64> {
        routing::solution::evaluate_cost(&self.inner, &instance.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(objective={:.6}, routes={}, feasible={})",
            self.inner.objective,
            self.inner.routes.len(),
            if self.inner.feasible { "True" } else { "False" }
        )
    }
}

/// Step-by-step access to the decision process. Actions are integers:
/// 0 returns to the depot, `1..=V` open a vehicle of type `k-1`, and
/// `V+j` visits customer `j`.
#[pyclass(module = "vap")]
struct Env {
    instance: routing::instance::Instance,
    state: EnvState,
    total_reward: f64,
    actions: Vec<usize>,
}

#[pymethods]
impl Env {
    #[new]
    fn new(instance: &Instance) -> Self {
        let inst = instance.inner.clone();
        let state = CoreEnv::new(&inst).reset();
        Self {
            instance: inst,
            state,
            total_reward: 0.0,
            actions: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.state = CoreEnv::new(&self.instance).reset();
        self.total_reward = 0.0;
        self.actions.clear();
    }

    fn mask(&self) -> Vec<bool> {
        CoreEnv::new(&self.instance).feasible_mask(&self.state)
    }

    /// Applies `action`; returns `(reward, done, infeasible)`. When the next
    /// state has no legal action but customers remain, the episode ends with
    /// the penalty folded into the returned reward.
    fn step(&mut self, action: usize) -> PyResult<(f64, bool, bool)> {
        let env = CoreEnv::new(&self.instance);
        let mut out = env.step_mut(&mut self.state, action).map_err(err)?;
        self.actions.push(action);
        if !out.done && env.feasible_mask(&self.state).iter().all(|&m| !m) {
            let p = env.terminate_infeasible(&mut self.state).map_err(err)?;
            out.reward += p.reward;
            out.done = true;
            out.infeasible = true;
        }
        self.total_reward += out.reward;
        Ok((out.reward, out.done, out.infeasible))
    }

    /// Human-readable label of an action index.
    fn describe(&self, action: usize) -> PyResult<String> {
        match CoreEnv::new(&self.instance).space().action(action) {
            Some(Action::Return) => Ok("return".into()),
            Some(Action::Vehicle(k)) => Ok(format!("vehicle {k}")),
            Some(Action::Customer(j)) => Ok(format!("customer {j}")),
            None => Err(PyValueError::new_err(format!("action {action} out of range"))),
        }
    }

    #[getter]
    fn done(&self) -> bool {
        self.state.done
    }

    #[getter]
    fn total_reward(&self) -> f64 {
        self.total_reward
    }

    #[getter]
    fn actions(&self) -> Vec<usize> {
        self.actions.clone()
    }

    /// Decodes the finished episode.
    fn solution(&self) -> PyResult<Solution> {
        if !self.state.done {
            return Err(PyValueError::new_err("episode is not finished"));
        }
        let traj = CoreEnv::new(&self.instance).replay(&self.actions).map_err(err)?;
        Ok(Solution {
            inner: routing::solution::Solution::from_trajectory(&traj, &self.instance).map_err(err)?,
        })
    }
}

/// Policy network parameters.
#[pyclass(module = "vap")]
struct Policy {
    params: ModelParams,
}

#[pymethods]
impl Policy {
    #[new]
    #[pyo3(signature = (d_h=128, n_layers=6, n_head=8, n_vehicle_types=3, d_ff=None, seed=0))]
    fn new(
        d_h: usize,
        n_layers: usize,
        n_head: usize,
        n_vehicle_types: usize,
        d_ff: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = ModelConfig {
            init_seed: seed,
            d_ff: d_ff.unwrap_or(4 * d_h),
            ..ModelConfig::small(d_h, n_layers, n_head, n_vehicle_types)
        };
        Ok(Self {
            params: ModelParams::init(&cfg).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            params: Checkpoint::load(Path::new(path)).map_err(err)?.params,
        })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Greedy decoding.
    fn greedy(&self, instance: &Instance) -> PyResult<Solution> {
        let r = greedy_rollout(&self.params, &instance.inner).map_err(err)?;
        Ok(Solution {
            inner: routing::solution::Solution::from_trajectory(&r.trajectory, &instance.inner).map_err(err)?,
        })
    }

    /// Best of `n` sampled rollouts.
    #[pyo3(signature = (instance, n=16, seed=0))]
    fn sample_best(&self, instance: &Instance, n: usize, seed: u64) -> PyResult<Solution> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Solution {
            inner: sample_best(&instance.inner, &self.params, n, &mut rng).map_err(err)?,
        })
    }
}

/// Nearest-feasible-customer construction heuristic.
#[pyfunction]
fn greedy_solve(instance: &Instance) -> Solution {
    Solution {
        inner: greedy_construct(&instance.inner),
    }
}

/// Exact optimum for tiny instances.
#[pyfunction]
fn oracle_solve(instance: &Instance) -> PyResult<Solution> {
    Ok(Solution {
        inner: exhaustive_solve(&instance.inner).map_err(err)?.best_solution,
    })
}

/// Trains from a TOML run description into `out_dir`; returns
/// `(start_val_cost, best_val_cost, epochs_completed)`.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir, resume=None))]
fn train(py: Python<'_>, config_toml: &str, out_dir: &str, resume: Option<&str>) -> PyResult<(f64, f64, usize)> {
    let run = RunConfig::from_toml(config_toml).map_err(err)?;
    let out = Path::new(out_dir).to_path_buf();
    let resume = resume.map(|r| Path::new(r).to_path_buf());
    let s = py
        .detach(move || train_to_dir(run, &out, resume.as_deref()))
        .map_err(err)?;
    Ok((s.start_val_cost, s.best_val_cost, s.epochs_completed))
}

#[pymodule]
fn vap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(greedy_solve, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_solve, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
