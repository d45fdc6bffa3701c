//! The vehicle-as-prompt decision process.
//!
//! Actions live in one index space of size `1 + V + N`: `0` closes the active
//! route, `1..=V` open a route with a vehicle type (a "prompt" that does not
//! move), and `V+1..=V+N` visit a customer. The mask is the conjunction of the
//! variant constraints and the generation-order rule.

mod trajectory;

use crate::error::{Error, Result};
use crate::instance::Instance;

pub use trajectory::{decode_solution, run_episode, Trajectory};

/// Decoded form of an action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Close the active route (return to the depot unless routes are open).
    Return,
    /// Open a route with this vehicle type.
    Vehicle(usize),
    /// Visit this customer (node id, 1-based).
    Customer(usize),
}

/// Bijection between [`Action`] and `0..1+V+N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub n_types: usize,
    pub n_customers: usize,
}

impl ActionSpace {
    pub fn of(inst: &Instance) -> Self {
        Self {
            n_types: inst.n_types(),
            n_customers: inst.n_customers(),
        }
    }

    pub fn len(&self) -> usize {
        1 + self.n_types + self.n_customers
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, a: Action) -> usize {
        match a {
            Action::Return => 0,
            Action::Vehicle(k) => 1 + k,
            Action::Customer(j) => self.n_types + j,
        }
    }

    pub fn action(&self, idx: usize) -> Option<Action> {
        if idx == 0 {
            Some(Action::Return)
        } else if idx <= self.n_types {
            Some(Action::Vehicle(idx - 1))
        } else if idx < self.len() {
            Some(Action::Customer(idx - self.n_types))
        } else {
            None
        }
    }
}

/// Where the decoder currently stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    /// No active vehicle; the next token must be a vehicle prompt.
    Depot,
    /// A vehicle type was just selected; physically still at the depot.
    Prompt(usize),
    /// At this customer node.
    Customer(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// `visited[j - 1]` for customer `j`.
    pub visited: Vec<bool>,
    pub active_type: Option<usize>,
    pub position: Position,
    /// Linehaul capacity left on the active vehicle.
    pub remaining_capacity: f64,
    /// Backhaul load picked up on the active route.
    pub used_backhaul: f64,
    pub route_distance: f64,
    pub clock: f64,
    pub remaining_count: Vec<u32>,
    pub served_count: usize,
    pub step: usize,
    /// Customers on the active route.
    pub route_len: usize,
    pub route_has_backhaul: bool,
    pub done: bool,
    pub infeasible: bool,
}

impl EnvState {
    /// Physical node of the decoder: prompts sit at the depot.
    pub fn current_node(&self) -> usize {
        match self.position {
            Position::Depot | Position::Prompt(_) => 0,
            Position::Customer(j) => j,
        }
    }

    pub fn unvisited(&self) -> impl Iterator<Item = usize> + '_ {
        self.visited.iter().enumerate().filter(|(_, &v)| !v).map(|(i, _)| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub infeasible: bool,
}

/// Environment bound to one instance, with a cached distance matrix.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    inst: &'a Instance,
    space: ActionSpace,
    dist: Vec<f64>,
}

impl<'a> Env<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        let n = inst.nodes.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = inst.dist(i, j);
            }
        }
        Self {
            inst,
            space: ActionSpace::of(inst),
            dist,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn space(&self) -> ActionSpace {
        self.space
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.inst.nodes.len() + j]
    }

    pub fn reset(&self) -> EnvState {
        EnvState {
            visited: vec![false; self.inst.n_customers()],
            active_type: None,
            position: Position::Depot,
            remaining_capacity: 0.0,
            used_backhaul: 0.0,
            route_distance: 0.0,
            clock: 0.0,
            remaining_count: self.inst.fleet.iter().map(|v| v.count).collect(),
            served_count: 0,
            step: 0,
            route_len: 0,
            route_has_backhaul: false,
            done: false,
            infeasible: false,
        }
    }

    /// Capacity, time-window and distance checks for visiting `j` with the
    /// active vehicle `k`. Precedence is handled by the caller.
    fn customer_fits(&self, state: &EnvState, k: usize, j: usize) -> bool {
        let inst = self.inst;
        let v = inst.variant;
        let node = &inst.nodes[j];
        let vt = &inst.fleet[k];
        if v.phi_b && node.is_backhaul() {
            if state.used_backhaul + node.q_b > vt.capacity {
                return false;
            }
        } else if node.q_l > state.remaining_capacity {
            return false;
        }
        let cur = state.current_node();
        let leg = self.dist(cur, j);
        let back = self.dist(j, 0);
        if v.phi_tw {
            let start = (state.clock + leg).max(node.e);
            if start > node.l {
                return false;
            }
            if !v.phi_o {
                let close = inst.depot_close.unwrap_or(f64::INFINITY);
                if start + node.s + back > close {
                    return false;
                }
            }
        }
        if v.phi_l {
            let limit = inst.dist_limit.unwrap_or(f64::INFINITY);
            let needed = state.route_distance + leg + if v.phi_o { 0.0 } else { back };
            if needed > limit {
                return false;
            }
        }
        true
    }

    /// Legal actions in `state`; an all-false vector means no decision is
    /// possible (episode finished, or a dead end if customers remain).
    pub fn feasible_mask(&self, state: &EnvState) -> Vec<bool> {
        let mut mask = vec![false; self.space.len()];
        if state.done {
            return mask;
        }
        let remaining = state.served_count < state.visited.len();
        match state.active_type {
            None => {
                if remaining {
                    for (k, &c) in state.remaining_count.iter().enumerate() {
                        mask[1 + k] = c > 0;
                    }
                }
            }
            Some(k) => {
                mask[0] = state.route_len > 0;
                let phi_b = self.inst.variant.phi_b;
                let mut linehaul_open = false;
                let mut backhaul_ok = Vec::new();
                for j in state.unvisited() {
                    let is_bh = phi_b && self.inst.nodes[j].is_backhaul();
                    if !is_bh && phi_b && state.route_has_backhaul {
                        continue;
                    }
                    if !self.customer_fits(state, k, j) {
                        continue;
                    }
                    if is_bh {
                        backhaul_ok.push(j);
                    } else {
                        linehaul_open = true;
                        mask[self.space.index(Action::Customer(j))] = true;
                    }
                }
                if !linehaul_open {
                    for j in backhaul_ok {
                        mask[self.space.index(Action::Customer(j))] = true;
                    }
                }
            }
        }
        mask
    }

    /// Applies a legal action in place.
    pub fn step_mut(&self, state: &mut EnvState, a: usize) -> Result<StepOutcome> {
        let mask = self.feasible_mask(state);
        if !mask.get(a).copied().unwrap_or(false) {
            return Err(Error::Contract(format!("action {a} is masked at step {}", state.step)));
        }
        let inst = self.inst;
        let reward = match self.space.action(a).expect("index checked by mask") {
            Action::Vehicle(k) => {
                let vt = &inst.fleet[k];
                state.active_type = Some(k);
                state.position = Position::Prompt(k);
                state.remaining_count[k] -= 1;
                state.remaining_capacity = vt.capacity;
                state.used_backhaul = 0.0;
                state.route_distance = 0.0;
                state.clock = 0.0;
                state.route_len = 0;
                state.route_has_backhaul = false;
                -vt.fixed_cost
            }
            Action::Customer(j) => {
                let k = state.active_type.expect("mask requires an active vehicle");
                let node = &inst.nodes[j];
                let leg = self.dist(state.current_node(), j);
                if inst.variant.phi_b && node.is_backhaul() {
                    state.used_backhaul += node.q_b;
                    state.route_has_backhaul = true;
                } else {
                    state.remaining_capacity -= node.q_l;
                }
                state.route_distance += leg;
                state.clock = (state.clock + leg).max(node.e) + node.s;
                state.visited[j - 1] = true;
                state.served_count += 1;
                state.route_len += 1;
                state.position = Position::Customer(j);
                -inst.fleet[k].unit_cost * leg
            }
            Action::Return => {
                let k = state.active_type.expect("mask requires an active vehicle");
                let r = if inst.variant.phi_o {
                    0.0
                } else {
                    let leg = self.dist(state.current_node(), 0);
                    state.route_distance += leg;
                    state.clock += leg;
                    -inst.fleet[k].unit_cost * leg
                };
                state.active_type = None;
                state.position = Position::Depot;
                state.route_len = 0;
                state.route_has_backhaul = false;
                r
            }
        };
        state.step += 1;
        if state.active_type.is_none() && state.served_count == state.visited.len() {
            state.done = true;
        }
        Ok(StepOutcome {
            reward,
            done: state.done,
            infeasible: false,
        })
    }

    pub fn step(&self, state: &EnvState, a: usize) -> Result<(EnvState, StepOutcome)> {
        let mut next = state.clone();
        let out = self.step_mut(&mut next, a)?;
        Ok((next, out))
    }

    /// Terminal reward for a dead-end state: every unserved customer priced as
    /// a direct round trip at the most expensive rates.
    pub fn penalty(&self, state: &EnvState) -> Result<f64> {
        if state.served_count == state.visited.len() {
            return Err(Error::Contract("penalty requested with no unvisited customers".into()));
        }
        if self.feasible_mask(state).iter().any(|&m| m) {
            return Err(Error::Contract(
                "penalty requested in a state with legal actions".into(),
            ));
        }
        let ac = self.inst.max_unit_cost();
        let fc = self.inst.max_fixed_cost();
        let mut total = 0.0;
        for i in state.unvisited() {
            total += ac * (self.dist(0, i) + self.dist(i, 0)) + fc;
        }
        Ok(-total)
    }

    /// Ends a dead-end episode with the penalty reward.
    pub fn terminate_infeasible(&self, state: &mut EnvState) -> Result<StepOutcome> {
        let reward = self.penalty(state)?;
        state.done = true;
        state.infeasible = true;
        Ok(StepOutcome {
            reward,
            done: true,
            infeasible: true,
        })
    }
}

#[cfg(test)]
mod tests;
