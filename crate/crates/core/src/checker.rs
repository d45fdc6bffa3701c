//! Route-level feasibility checking.
//!
//! Deliberately shares nothing with the environment's masking code: routes are
//! re-simulated from the instance data with their own geometry and load
//! bookkeeping, so agreement between the two is evidence rather than identity.

use thiserror::Error;

use crate::instance::Instance;
use crate::solution::Solution;

/// Slack for comparisons of recomputed floating-point sums.
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("customer {0} is not served")]
    Unserved(usize),
    #[error("customer {0} is served more than once")]
    ServedTwice(usize),
    #[error("route {route} visits unknown node {node}")]
    UnknownNode { route: usize, node: usize },
    #[error("route {route} uses unknown vehicle type {vehicle_type}")]
    UnknownVehicleType { route: usize, vehicle_type: usize },
    #[error("route {0} serves no customer")]
    EmptyRoute(usize),
    #[error("route {route} return flag disagrees with the open-route setting")]
    ReturnFlag { route: usize },
    #[error("vehicle type {vehicle_type} used {used} times, {available} available")]
    FleetExceeded {
        vehicle_type: usize,
        used: u32,
        available: u32,
    },
    #[error("route {route} load {load} exceeds capacity {capacity}")]
    Capacity { route: usize, load: f64, capacity: f64 },
    #[error("route {route} serves linehaul customer {customer} after a backhaul")]
    BackhaulPrecedence { route: usize, customer: usize },
    #[error("route {route} length {length} exceeds limit {limit}")]
    DistanceLimit { route: usize, length: f64, limit: f64 },
    #[error("route {route} starts service at customer {customer} at {start}, window closes {close}")]
    TimeWindow {
        route: usize,
        customer: usize,
        start: f64,
        close: f64,
    },
    #[error("route {route} returns at {arrival}, depot closes {close}")]
    DepotDeadline { route: usize, arrival: f64, close: f64 },
}

fn euclid(inst: &Instance, a: usize, b: usize) -> f64 {
    let (p, q) = (&inst.nodes[a], &inst.nodes[b]);
    ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
}

/// All constraint violations of `sol`; empty iff feasible under the
/// instance's variant.
pub fn check_feasibility(sol: &Solution, inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.n_customers();
    let var = inst.variant;
    let mut times_served = vec![0usize; n + 1];
    let mut used = vec![0u32; inst.fleet.len()];

    for (ri, route) in sol.routes.iter().enumerate() {
        let Some(vt) = inst.fleet.get(route.vehicle_type) else {
            out.push(Violation::UnknownVehicleType {
                route: ri,
                vehicle_type: route.vehicle_type,
            });
            continue;
        };
        used[route.vehicle_type] += 1;
        if route.customers.is_empty() {
            out.push(Violation::EmptyRoute(ri));
        }
        if route.closed == var.phi_o {
            out.push(Violation::ReturnFlag { route: ri });
        }
        if let Some(&bad) = route.customers.iter().find(|&&c| c == 0 || c > n) {
            out.push(Violation::UnknownNode { route: ri, node: bad });
            continue;
        }
        for &c in &route.customers {
            times_served[c] += 1;
        }

        let is_pickup = |c: usize| var.phi_b && inst.nodes[c].q_b > 0.0;
        // Vehicle leaves with every delivery of the route on board.
        let deliveries: f64 = route
            .customers
            .iter()
            .filter(|&&c| !is_pickup(c))
            .map(|&c| inst.nodes[c].q_l)
            .sum();
        let mut load = deliveries;
        let mut peak = load;
        let mut seen_pickup = false;
        let mut length = 0.0;
        let mut time = 0.0;
        let mut at = 0;
        for &c in &route.customers {
            let node = &inst.nodes[c];
            if is_pickup(c) {
                seen_pickup = true;
                load += node.q_b;
            } else {
                if seen_pickup {
                    out.push(Violation::BackhaulPrecedence { route: ri, customer: c });
                }
                load -= node.q_l;
            }
            peak = peak.max(load);
            let leg = euclid(inst, at, c);
            length += leg;
            let arrive = time + leg;
            let start = if arrive < node.e { node.e } else { arrive };
            if var.phi_tw && start > node.l + TOL {
                out.push(Violation::TimeWindow {
                    route: ri,
                    customer: c,
                    start,
                    close: node.l,
                });
            }
            time = start + node.s;
            at = c;
        }
        if peak > vt.capacity + TOL {
            out.push(Violation::Capacity {
                route: ri,
                load: peak,
                capacity: vt.capacity,
            });
        }
        if !var.phi_o {
            let leg = euclid(inst, at, 0);
            length += leg;
            time += leg;
            if var.phi_tw {
                let close = inst.depot_close.unwrap_or(f64::INFINITY);
                if time > close + TOL {
                    out.push(Violation::DepotDeadline {
                        route: ri,
                        arrival: time,
                        close,
                    });
                }
            }
        }
        if var.phi_l {
            let limit = inst.dist_limit.unwrap_or(f64::INFINITY);
            if length > limit + TOL {
                out.push(Violation::DistanceLimit {
                    route: ri,
                    length,
                    limit,
                });
            }
        }
    }

    for (c, &t) in times_served.iter().enumerate().skip(1) {
        match t {
            0 => out.push(Violation::Unserved(c)),
            1 => {}
            _ => out.push(Violation::ServedTwice(c)),
        }
    }
    for (k, &u) in used.iter().enumerate() {
        let available = inst.fleet[k].count;
        if u > available {
            out.push(Violation::FleetExceeded {
                vehicle_type: k,
                used: u,
                available,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Node, VariantFlags, VehicleType};
    use crate::solution::Route;

    fn node(id: usize, x: f64, y: f64, q_l: f64, q_b: f64) -> Node {
        Node {
            id,
            x,
            y,
            q_l,
            q_b,
            e: 0.0,
            l: 10.0,
            s: 0.0,
        }
    }

    fn inst(variant: VariantFlags) -> Instance {
        Instance {
            variant,
            nodes: vec![
                node(0, 0.0, 0.0, 0.0, 0.0),
                node(1, 0.5, 0.0, 3.0, 0.0),
                node(2, 0.5, 0.5, 0.0, 2.0),
                node(3, 0.0, 0.5, 4.0, 0.0),
            ],
            fleet: vec![VehicleType {
                id: 0,
                capacity: 8.0,
                fixed_cost: 0.1,
                unit_cost: 1.0,
                count: 1,
            }],
            dist_limit: Some(1.5),
            depot_close: Some(10.0),
        }
    }

    fn sol(customers: Vec<usize>, closed: bool) -> Solution {
        Solution {
            objective: 0.0,
            routes: vec![Route {
                vehicle_type: 0,
                customers,
                closed,
            }],
            feasible: true,
        }
    }

    #[test]
    fn feasible_route_has_no_violations() {
        let i = inst(VariantFlags::BACKHAUL);
        assert!(check_feasibility(&sol(vec![1, 3, 2], true), &i).is_empty());
    }

    #[test]
    fn backhaul_before_linehaul_is_reported() {
        let i = inst(VariantFlags::BACKHAUL);
        let v = check_feasibility(&sol(vec![1, 2, 3], true), &i);
        assert_eq!(v, vec![Violation::BackhaulPrecedence { route: 0, customer: 3 }]);
    }

    #[test]
    fn distance_limit_is_reported() {
        let i = inst(VariantFlags::DISTANCE);
        // 0.5 + 0.5 + 0.5 + 0.5 = 2.0 > 1.5
        let v = check_feasibility(&sol(vec![1, 2, 3], true), &i);
        assert!(matches!(v.as_slice(), [Violation::DistanceLimit { route: 0, .. }]));
    }

    #[test]
    fn capacity_coverage_and_fleet() {
        let mut i = inst(VariantFlags::CVRP);
        i.fleet[0].capacity = 5.0;
        let two = Solution {
            objective: 0.0,
            routes: vec![
                Route {
                    vehicle_type: 0,
                    customers: vec![1, 3],
                    closed: true,
                },
                Route {
                    vehicle_type: 0,
                    customers: vec![1],
                    closed: true,
                },
            ],
            feasible: true,
        };
        let v = check_feasibility(&two, &i);
        assert!(v.contains(&Violation::Capacity {
            route: 0,
            load: 7.0,
            capacity: 5.0
        }));
        assert!(v.contains(&Violation::Unserved(2)));
        assert!(v.contains(&Violation::ServedTwice(1)));
        assert!(v.contains(&Violation::FleetExceeded {
            vehicle_type: 0,
            used: 2,
            available: 1
        }));
    }

    #[test]
    fn time_window_and_depot_deadline() {
        let mut i = inst(VariantFlags::TIME_WINDOWS);
        i.nodes[3].l = 0.6;
        i.depot_close = Some(1.9);
        let v = check_feasibility(&sol(vec![1, 2, 3], true), &i);
        assert!(v.iter().any(|x| matches!(x, Violation::TimeWindow { customer: 3, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::DepotDeadline { .. })));
    }

    #[test]
    fn return_flag_must_match_variant() {
        let i = inst(VariantFlags::OPEN);
        let v = check_feasibility(&sol(vec![1, 2, 3], true), &i);
        assert_eq!(v, vec![Violation::ReturnFlag { route: 0 }]);
    }
}
