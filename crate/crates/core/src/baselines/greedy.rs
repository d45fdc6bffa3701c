use rand::Rng;

use crate::env::{run_episode, Action, Env, EnvState, Trajectory};
use crate::error::Result;
use crate::instance::Instance;
use crate::solution::Solution;

/// Vehicle-type order for the greedy heuristic: cheapest combined rate per
/// unit of capacity first, ties by index.
fn type_order(inst: &Instance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.n_types()).collect();
    let key = |k: usize| {
        let v = &inst.fleet[k];
        (v.fixed_cost + v.unit_cost) / v.capacity
    };
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    order
}

/// Nearest legal customer; with time windows, the earliest possible service
/// start comes first and distance breaks ties.
fn nearest(env: &Env<'_>, state: &EnvState, mask: &[bool]) -> Option<usize> {
    let space = env.space();
    let inst = env.instance();
    let here = state.current_node();
    let mut best: Option<((f64, f64), usize)> = None;
    for (a, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        if let Some(Action::Customer(j)) = space.action(a) {
            let d = env.dist(here, j);
            let start = if inst.variant.phi_tw {
                (state.clock + d).max(inst.nodes[j].e)
            } else {
                0.0
            };
            let key = (start, d);
            if best.is_none_or(|(bk, _)| key < bk) {
                best = Some((key, a));
            }
        }
    }
    best.map(|(_, a)| a)
}

fn greedy_choice(env: &Env<'_>, order: &[usize], state: &EnvState, mask: &[bool]) -> usize {
    let space = env.space();
    if state.active_type.is_some() {
        return nearest(env, state, mask).unwrap_or_else(|| space.index(Action::Return));
    }
    // Prefer a vehicle that can serve at least one remaining customer.
    let vehicles: Vec<usize> = order
        .iter()
        .map(|&k| space.index(Action::Vehicle(k)))
        .filter(|&a| mask[a])
        .collect();
    for &a in &vehicles {
        let (next, _) = env.step(state, a).expect("vehicle taken from the mask");
        if env.feasible_mask(&next).iter().any(|&m| m) {
            return a;
        }
    }
    vehicles[0]
}

pub fn greedy_trajectory(inst: &Instance) -> Trajectory {
    let env = Env::new(inst);
    let order = type_order(inst);
    run_episode(&env, |s, m| Ok(greedy_choice(&env, &order, s, m))).expect("greedy choices are mask-legal")
}

/// Opens the cheapest-per-capacity vehicle that can still serve someone,
/// extends the route with the nearest mask-feasible customer until none
/// fits, and repeats. Returns a partial, infeasible solution only when the
/// fleet runs out.
pub fn greedy_construct(inst: &Instance) -> Solution {
    let traj = greedy_trajectory(inst);
    Solution::from_trajectory(&traj, inst).expect("greedy trajectories decode")
}

/// Uniformly random legal actions until the episode ends.
pub fn random_rollout<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Trajectory> {
    let env = Env::new(inst);
    run_episode(&env, |_, m| {
        let legal = m.iter().filter(|&&x| x).count();
        let pick = rng.gen_range(0..legal);
        Ok(m.iter()
            .enumerate()
            .filter(|(_, &x)| x)
            .nth(pick)
            .expect("pick in range")
            .0)
    })
}
