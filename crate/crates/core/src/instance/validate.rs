use thiserror::Error;

use super::{distance, Instance};

/// Structural problem with an instance.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceViolation {
    #[error("instance has no depot")]
    MissingDepot,
    #[error("node at position {index} has id {id}")]
    NodeIdMismatch { index: usize, id: usize },
    #[error("vehicle type at position {index} has id {id}")]
    FleetIdMismatch { index: usize, id: usize },
    #[error("depot must have zero demand and service time")]
    DepotNotEmpty,
    #[error("node {node} has non-finite attributes")]
    NonFinite { node: usize },
    #[error("node {node} lies outside the unit square")]
    OutsideUnitSquare { node: usize },
    #[error("node {node} has negative demand or service time")]
    NegativeQuantity { node: usize },
    #[error("node {node} has window open {e} after close {l}")]
    WindowInverted { node: usize, e: f64, l: f64 },
    #[error("customer {customer} has both linehaul and backhaul demand")]
    MixedDemand { customer: usize },
    #[error("customer {customer} demand {demand} exceeds the largest capacity {max_capacity}")]
    DemandExceedsCapacity {
        customer: usize,
        demand: f64,
        max_capacity: f64,
    },
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("vehicle type {vehicle_type} has invalid capacity or costs")]
    InvalidVehicle { vehicle_type: usize },
    #[error("distance limit variant without a finite limit")]
    MissingDistLimit,
    #[error("customer {customer} round trip {round_trip} exceeds the distance limit {limit}")]
    RoundTripExceedsLimit {
        customer: usize,
        round_trip: f64,
        limit: f64,
    },
    #[error("time window variant without a finite depot closing time")]
    MissingDepotClose,
    #[error("customer {customer} cannot be served by a direct trip within its window and the depot closing time")]
    WindowUnreachable { customer: usize },
}

/// Every violated instance invariant; empty iff the instance is well formed.
pub fn validate_instance(inst: &Instance) -> Vec<InstanceViolation> {
    use InstanceViolation as V;
    let mut out = Vec::new();
    if inst.nodes.is_empty() {
        out.push(V::MissingDepot);
        return out;
    }
    for (index, node) in inst.nodes.iter().enumerate() {
        if node.id != index {
            out.push(V::NodeIdMismatch { index, id: node.id });
        }
        let vals = [node.x, node.y, node.q_l, node.q_b, node.e, node.l, node.s];
        if vals.iter().any(|v| !v.is_finite()) {
            out.push(V::NonFinite { node: index });
            continue;
        }
        if !(0.0..=1.0).contains(&node.x) || !(0.0..=1.0).contains(&node.y) {
            out.push(V::OutsideUnitSquare { node: index });
        }
        if node.q_l < 0.0 || node.q_b < 0.0 || node.s < 0.0 {
            out.push(V::NegativeQuantity { node: index });
        }
        if node.e > node.l {
            out.push(V::WindowInverted {
                node: index,
                e: node.e,
                l: node.l,
            });
        }
    }
    let depot = &inst.nodes[0];
    if depot.q_l != 0.0 || depot.q_b != 0.0 || depot.s != 0.0 {
        out.push(V::DepotNotEmpty);
    }

    if inst.fleet.is_empty() {
        out.push(V::EmptyFleet);
    }
    for (index, vt) in inst.fleet.iter().enumerate() {
        if vt.id != index {
            out.push(V::FleetIdMismatch { index, id: vt.id });
        }
        let ok = vt.capacity.is_finite()
            && vt.capacity > 0.0
            && vt.fixed_cost.is_finite()
            && vt.fixed_cost >= 0.0
            && vt.unit_cost.is_finite()
            && vt.unit_cost > 0.0;
        if !ok {
            out.push(V::InvalidVehicle { vehicle_type: index });
        }
    }

    let max_q = inst.max_capacity();
    let limit = if inst.variant.phi_l {
        match inst.dist_limit {
            Some(l) if l.is_finite() => Some(l),
            _ => {
                out.push(V::MissingDistLimit);
                None
            }
        }
    } else {
        None
    };
    let close = if inst.variant.phi_tw {
        match inst.depot_close {
            Some(c) if c.is_finite() => Some(c),
            _ => {
                out.push(V::MissingDepotClose);
                None
            }
        }
    } else {
        None
    };

    for c in inst.nodes.iter().skip(1) {
        if inst.variant.phi_b && c.q_l > 0.0 && c.q_b > 0.0 {
            out.push(V::MixedDemand { customer: c.id });
        }
        let demand = if inst.variant.phi_b { c.q_l.max(c.q_b) } else { c.q_l };
        if demand > max_q {
            out.push(V::DemandExceedsCapacity {
                customer: c.id,
                demand,
                max_capacity: max_q,
            });
        }
        let c0 = distance(depot.loc(), c.loc());
        if let Some(limit) = limit {
            let round_trip = if inst.variant.phi_o { c0 } else { 2.0 * c0 };
            if round_trip > limit {
                out.push(V::RoundTripExceedsLimit {
                    customer: c.id,
                    round_trip,
                    limit,
                });
            }
        }
        if let Some(close) = close {
            let start = c0.max(c.e);
            let back = if inst.variant.phi_o { 0.0 } else { c0 };
            if start > c.l || (!inst.variant.phi_o && start + c.s + back > close) {
                out.push(V::WindowUnreachable { customer: c.id });
            }
        }
    }
    out
}
