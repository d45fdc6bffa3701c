use serde::{Deserialize, Serialize};

use super::{Action, Env, EnvState};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::solution::{Route, Solution};

/// A decoded episode. `total_reward = Σ rewards + penalty`; `penalty` is
/// non-zero only for episodes cut short at a dead end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub penalty: f64,
    pub infeasible: bool,
    pub total_reward: f64,
}

impl Trajectory {
    pub fn new() -> Self {
        Self {
            actions: Vec::new(),
            rewards: Vec::new(),
            penalty: 0.0,
            infeasible: false,
            total_reward: 0.0,
        }
    }

    fn push(&mut self, action: usize, reward: f64) {
        self.actions.push(action);
        self.rewards.push(reward);
        self.total_reward += reward;
    }

    fn close_infeasible(&mut self, penalty: f64) {
        self.penalty = penalty;
        self.infeasible = true;
        self.total_reward += penalty;
    }

    /// `-total_reward`; penalty included.
    pub fn cost(&self) -> f64 {
        -self.total_reward
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}

/// Drives one episode from `reset`, asking `choose` for an action whenever a
/// decision is possible. Dead ends terminate with the penalty reward.
pub fn run_episode<F>(env: &Env<'_>, mut choose: F) -> Result<Trajectory>
where
    F: FnMut(&EnvState, &[bool]) -> Result<usize>,
{
    let mut state = env.reset();
    let mut traj = Trajectory::new();
    while !state.done {
        let mask = env.feasible_mask(&state);
        if !mask.iter().any(|&m| m) {
            let out = env.terminate_infeasible(&mut state)?;
            traj.close_infeasible(out.reward);
            break;
        }
        let a = choose(&state, &mask)?;
        let out = env.step_mut(&mut state, a)?;
        traj.push(a, out.reward);
    }
    Ok(traj)
}

impl Env<'_> {
    /// Replays a recorded action sequence, rejecting any masked action.
    pub fn replay(&self, actions: &[usize]) -> Result<Trajectory> {
        let mut it = actions.iter();
        let traj = run_episode(self, |state, _| {
            it.next()
                .copied()
                .ok_or_else(|| Error::Decode(format!("action sequence ends early at step {}", state.step)))
        })?;
        if it.next().is_some() {
            return Err(Error::Decode("actions continue past the end of the episode".into()));
        }
        Ok(traj)
    }
}

/// Splits a complete trajectory into routes at vehicle tokens and token 0.
pub fn decode_solution(traj: &Trajectory, inst: &Instance) -> Result<Solution> {
    if traj.infeasible {
        return Err(Error::Decode("trajectory ended in an infeasible state".into()));
    }
    let space = super::ActionSpace::of(inst);
    let closed = !inst.variant.phi_o;
    let mut routes = Vec::new();
    let mut open: Option<Route> = None;
    for (step, &a) in traj.actions.iter().enumerate() {
        match space.action(a) {
            Some(Action::Vehicle(k)) => {
                if open.is_some() {
                    return Err(Error::Decode(format!(
                        "vehicle token inside an open route at step {step}"
                    )));
                }
                open = Some(Route {
                    vehicle_type: k,
                    customers: Vec::new(),
                    closed,
                });
            }
            Some(Action::Customer(j)) => match open.as_mut() {
                Some(r) => r.customers.push(j),
                None => return Err(Error::Decode(format!("customer without a vehicle at step {step}"))),
            },
            Some(Action::Return) => match open.take() {
                Some(r) => routes.push(r),
                None => return Err(Error::Decode(format!("route end without a route at step {step}"))),
            },
            None => return Err(Error::Decode(format!("action index {a} out of range"))),
        }
    }
    if open.is_some() {
        return Err(Error::Decode("trajectory ends with an open route".into()));
    }
    let mut seen = vec![false; inst.n_customers()];
    for r in &routes {
        for &j in &r.customers {
            if std::mem::replace(&mut seen[j - 1], true) {
                return Err(Error::Decode(format!("customer {j} visited twice")));
            }
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Decode(format!("customer {} never visited", j + 1)));
    }
    Ok(Solution {
        routes,
        objective: traj.cost(),
        feasible: true,
    })
}
