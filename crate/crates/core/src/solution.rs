//! Route-level solutions, their JSON form, and the objective.

use serde::{Deserialize, Serialize};

use crate::checker::check_feasibility;
use crate::env::{decode_solution, Action, ActionSpace, Trajectory};
use crate::error::{Error, Result};
use crate::instance::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub vehicle_type: usize,
    /// Customer node ids in visiting order.
    pub customers: Vec<usize>,
    /// Whether the route returns to the depot.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    pub objective: f64,
    pub routes: Vec<Route>,
    /// False for partial solutions of dead-end episodes; `objective` then
    /// includes the penalty.
    pub feasible: bool,
}

impl Solution {
    /// Decodes a complete trajectory, or keeps the served prefix of a
    /// dead-end one.
    pub fn from_trajectory(traj: &Trajectory, inst: &Instance) -> Result<Solution> {
        if !traj.infeasible {
            return decode_solution(traj, inst);
        }
        let space = ActionSpace::of(inst);
        let closed = !inst.variant.phi_o;
        let mut routes: Vec<Route> = Vec::new();
        for &a in &traj.actions {
            match space.action(a) {
                Some(Action::Vehicle(k)) => routes.push(Route {
                    vehicle_type: k,
                    customers: Vec::new(),
                    closed,
                }),
                Some(Action::Customer(j)) => {
                    routes
                        .last_mut()
                        .ok_or_else(|| Error::Decode("customer without a vehicle".into()))?
                        .customers
                        .push(j);
                }
                Some(Action::Return) => {}
                None => return Err(Error::Decode(format!("action index {a} out of range"))),
            }
        }
        Ok(Solution {
            objective: traj.cost(),
            routes,
            feasible: false,
        })
    }

    /// Token sequence that reproduces this solution in the environment.
    pub fn to_actions(&self, inst: &Instance) -> Vec<usize> {
        let space = ActionSpace::of(inst);
        let mut out = Vec::new();
        for r in &self.routes {
            out.push(space.index(Action::Vehicle(r.vehicle_type)));
            out.extend(r.customers.iter().map(|&j| space.index(Action::Customer(j))));
            out.push(space.index(Action::Return));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Fixed cost plus distance cost of one route, legs summed in visiting order.
pub fn route_cost(route: &Route, inst: &Instance) -> f64 {
    let vt = &inst.fleet[route.vehicle_type];
    let mut legs = 0.0;
    let mut prev = 0;
    for &j in &route.customers {
        legs += inst.dist(prev, j);
        prev = j;
    }
    if route.closed {
        legs += inst.dist(prev, 0);
    }
    vt.fixed_cost + vt.unit_cost * legs
}

/// Total operational cost of a feasible solution.
pub fn evaluate_cost(sol: &Solution, inst: &Instance) -> Result<f64> {
    let violations = check_feasibility(sol, inst);
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }
    Ok(sol.routes.iter().map(|r| route_cost(r, inst)).sum())
}
