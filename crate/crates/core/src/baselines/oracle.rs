//! Exact search for tiny instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::greedy::greedy_construct;
use crate::env::{Action, Env, EnvState, Position};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::solution::{evaluate_cost, Solution};

pub const MAX_ORACLE_CUSTOMERS: usize = 7;
pub const MAX_ORACLE_FLEET: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_solution: Solution,
    pub best_cost: f64,
    pub nodes_explored: u64,
}

pub fn check_oracle_size(inst: &Instance) -> Result<()> {
    if inst.n_customers() > MAX_ORACLE_CUSTOMERS || inst.fleet_size() > MAX_ORACLE_FLEET {
        return Err(Error::SizeGuard(format!(
            "{} customers and {} vehicles; the limit is {MAX_ORACLE_CUSTOMERS} customers and {MAX_ORACLE_FLEET} vehicles",
            inst.n_customers(),
            inst.fleet_size()
        )));
    }
    Ok(())
}

struct Search<'a> {
    env: &'a Env<'a>,
    /// Cheapest possible arrival leg per customer, already priced.
    entry_bound: Vec<f64>,
    /// Route order is canonicalized unless mask decisions depend on the
    /// order in which routes are built.
    canonical: bool,
    best: f64,
    best_actions: Option<Vec<usize>>,
    nodes: u64,
    path: Vec<usize>,
}

impl Search<'_> {
    /// Admissible bound on the cost still to come.
    fn remaining_bound(&self, state: &EnvState) -> f64 {
        state.unvisited().map(|j| self.entry_bound[j]).sum()
    }

    fn dfs(&mut self, state: &EnvState, cost: f64, last_key: Option<(usize, usize)>) {
        self.nodes += 1;
        if state.done {
            if cost < self.best {
                self.best = cost;
                self.best_actions = Some(self.path.clone());
            }
            return;
        }
        if cost + self.remaining_bound(state) >= self.best {
            return;
        }
        let mask = self.env.feasible_mask(state);
        let space = self.env.space();
        for a in (0..mask.len()).filter(|&a| mask[a]) {
            let mut key = last_key;
            if self.canonical {
                match (space.action(a), state.position) {
                    (Some(Action::Vehicle(k)), _) if last_key.is_some_and(|(lk, _)| k < lk) => continue,
                    (Some(Action::Customer(j)), Position::Prompt(k)) => {
                        if last_key.is_some_and(|lk| (k, j) <= lk) {
                            continue;
                        }
                        key = Some((k, j));
                    }
                    _ => {}
                }
            }
            let mut next = state.clone();
            let out = self.env.step_mut(&mut next, a).expect("action taken from the mask");
            self.path.push(a);
            self.dfs(&next, cost - out.reward, key);
            self.path.pop();
        }
    }
}

fn entry_bounds(env: &Env<'_>, inst: &Instance) -> Vec<f64> {
    let n = inst.nodes.len();
    let min_ac = inst.fleet.iter().map(|v| v.unit_cost).fold(f64::INFINITY, f64::min);
    (0..n)
        .map(|j| {
            if j == 0 {
                return 0.0;
            }
            let d = (0..n)
                .filter(|&i| i != j)
                .map(|i| env.dist(i, j))
                .fold(f64::INFINITY, f64::min);
            // A hair below the true value so that rounding never prunes an
            // optimal branch.
            (min_ac * d * (1.0 - 1e-12)).max(0.0)
        })
        .collect()
}

/// Minimum-cost solution by depth-first search through the environment's
/// masks with branch-and-bound. Subtrees below each first action are
/// searched in parallel; ties resolve to the first trajectory in action
/// order, so the result does not depend on scheduling.
pub fn exhaustive_solve(inst: &Instance) -> Result<OracleResult> {
    check_oracle_size(inst)?;
    let env = Env::new(inst);
    let bounds = entry_bounds(&env, inst);
    // A feasible greedy cost caps the search from the start.
    let greedy = greedy_construct(inst);
    let upper = match &greedy {
        s if s.feasible => evaluate_cost(s, inst)
            .map(|c| c * (1.0 + 1e-9) + 1e-12)
            .unwrap_or(f64::INFINITY),
        _ => f64::INFINITY,
    };
    let root = env.reset();
    let mask = env.feasible_mask(&root);
    let firsts: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
    let canonical = !inst.variant.phi_b;
    let results: Vec<(f64, Option<Vec<usize>>, u64)> = firsts
        .par_iter()
        .map(|&a| {
            let mut s = Search {
                env: &env,
                entry_bound: bounds.clone(),
                canonical,
                best: upper,
                best_actions: None,
                nodes: 1,
                path: vec![a],
            };
            let mut next = root.clone();
            let out = env.step_mut(&mut next, a).expect("first action from the mask");
            s.dfs(&next, -out.reward, None);
            (s.best, s.best_actions, s.nodes)
        })
        .collect();

    let nodes_explored = results.iter().map(|r| r.2).sum();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (c, acts, _) in results {
        if let Some(acts) = acts {
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, acts));
            }
        }
    }
    let best_solution = match best {
        Some((_, actions)) => Solution::from_trajectory(&env.replay(&actions)?, inst)?,
        None if greedy.feasible => greedy,
        None => {
            return Err(Error::Unsolvable(
                "no mask-legal trajectory serves every customer".into(),
            ))
        }
    };
    let best_cost = evaluate_cost(&best_solution, inst)?;
    Ok(OracleResult {
        best_solution: Solution {
            objective: best_cost,
            ..best_solution
        },
        best_cost,
        nodes_explored,
    })
}

/// Calls `visit` with the actions and cost of every complete mask-legal
/// trajectory, without pruning. Intended for tiny instances.
pub fn enumerate_trajectories(inst: &Instance, mut visit: impl FnMut(&[usize], f64)) -> Result<u64> {
    check_oracle_size(inst)?;
    let env = Env::new(inst);
    let mut path = Vec::new();
    let mut count = 0;
    fn rec(
        env: &Env<'_>,
        s: &EnvState,
        cost: f64,
        path: &mut Vec<usize>,
        count: &mut u64,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if s.done {
            *count += 1;
            visit(path, cost);
            return;
        }
        let mask = env.feasible_mask(s);
        for a in (0..mask.len()).filter(|&a| mask[a]) {
            let mut next = s.clone();
            let out = env.step_mut(&mut next, a).expect("action taken from the mask");
            path.push(a);
            rec(env, &next, cost - out.reward, path, count, visit);
            path.pop();
        }
    }
    rec(&env, &env.reset(), 0.0, &mut path, &mut count, &mut visit);
    Ok(count)
}
