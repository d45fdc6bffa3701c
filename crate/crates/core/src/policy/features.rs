//! Raw network inputs derived from an instance and a decoding state.

use crate::autodiff::Matrix;
use crate::env::{EnvState, Position};
use crate::instance::Instance;

pub const PROMPT_FEATURES: usize = 4;
/// `[x, y]`.
pub const DEPOT_FEATURES: usize = 2;
/// `[x, y, q_l/Qmax, q_b/Qmax, e/l0, l/l0, s/l0]`; time entries are zero
/// without time windows.
pub const CUSTOMER_FEATURES: usize = 7;
/// `[Q/Qmax, fc, ac, count/K]`.
pub const VEHICLE_FEATURES: usize = 4;
/// Remaining capacity, route distance and clock ratios; the per-type
/// availability ratios follow.
pub const STATUS_BASE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub prompt: Matrix,
    pub depot: Matrix,
    pub customers: Matrix,
    pub vehicles: Matrix,
}

pub fn instance_features(inst: &Instance) -> Features {
    let q_max = inst.max_capacity();
    let k_total = inst.fleet_size().max(1) as f64;
    let depot = inst.depot();
    let tw = inst.variant.phi_tw;
    let l0 = inst.depot_close.filter(|c| *c > 0.0).unwrap_or(1.0);
    let customers: Vec<Vec<f64>> = inst
        .customers()
        .iter()
        .map(|c| {
            let t = |v: f64| if tw { v / l0 } else { 0.0 };
            let q_b = if inst.variant.phi_b { c.q_b / q_max } else { 0.0 };
            vec![c.x, c.y, c.q_l / q_max, q_b, t(c.e), t(c.l), t(c.s)]
        })
        .collect();
    let vehicles: Vec<Vec<f64>> = inst
        .fleet
        .iter()
        .map(|v| vec![v.capacity / q_max, v.fixed_cost, v.unit_cost, v.count as f64 / k_total])
        .collect();
    Features {
        prompt: Matrix::row_vector(inst.variant.as_vector().to_vec()),
        depot: Matrix::row_vector(vec![depot.x, depot.y]),
        customers: Matrix::from_vec(inst.n_customers(), CUSTOMER_FEATURES, customers.concat()),
        vehicles: Matrix::from_rows(&vehicles),
    }
}

/// Dynamic decoder context for the current decision.
pub fn status_features(inst: &Instance, state: &EnvState) -> Vec<f64> {
    let cap = match state.active_type {
        Some(k) => state.remaining_capacity / inst.fleet[k].capacity,
        None => 0.0,
    };
    let dist_scale = if inst.variant.phi_l {
        inst.dist_limit.filter(|d| *d > 0.0).unwrap_or(1.0)
    } else {
        1.0
    };
    let time_scale = if inst.variant.phi_tw {
        inst.depot_close.filter(|d| *d > 0.0).unwrap_or(1.0)
    } else {
        1.0
    };
    let mut out = vec![cap, state.route_distance / dist_scale, state.clock / time_scale];
    for (k, vt) in inst.fleet.iter().enumerate() {
        out.push(if vt.count > 0 {
            state.remaining_count[k] as f64 / vt.count as f64
        } else {
            0.0
        });
    }
    out
}

/// Row of the global embedding that represents the current token: rows are
/// laid out exactly like action indices.
pub fn current_row(inst: &Instance, state: &EnvState) -> usize {
    match state.position {
        Position::Depot => 0,
        Position::Prompt(k) => 1 + k,
        Position::Customer(j) => inst.n_types() + j,
    }
}
