use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::checker::check_feasibility;
use crate::instance::{generate_instance, GeneratorConfig, Node, VariantFlags, VehicleType};
use crate::solution::evaluate_cost;

fn node(id: usize, x: f64, y: f64, q_l: f64) -> Node {
    Node {
        id,
        x,
        y,
        q_l,
        q_b: 0.0,
        e: 0.0,
        l: 100.0,
        s: 0.0,
    }
}

fn vehicle(id: usize, capacity: f64, fixed_cost: f64, unit_cost: f64, count: u32) -> VehicleType {
    VehicleType {
        id,
        capacity,
        fixed_cost,
        unit_cost,
        count,
    }
}

fn small(variant: VariantFlags) -> Instance {
    Instance {
        variant,
        nodes: vec![
            node(0, 0.0, 0.0, 0.0),
            node(1, 0.3, 0.4, 4.0),
            node(2, 0.6, 0.8, 7.0),
            node(3, 0.0, 0.5, 2.0),
        ],
        fleet: vec![vehicle(0, 10.0, 0.2, 1.0, 1), vehicle(1, 20.0, 0.3, 2.0, 1)],
        dist_limit: Some(3.0),
        depot_close: Some(100.0),
    }
}

fn random_choice(rng: &mut ChaCha8Rng, mask: &[bool]) -> usize {
    let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    legal[rng.gen_range(0..legal.len())]
}

#[test]
fn fresh_state_allows_only_available_vehicles() {
    let mut inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    let s = env.reset();
    assert_eq!((s.served_count, s.step), (0, 0));
    assert_eq!(env.feasible_mask(&s), vec![false, true, true, false, false, false]);

    inst.fleet[0].count = 0;
    let env = Env::new(&inst);
    assert_eq!(
        env.feasible_mask(&env.reset()),
        vec![false, false, true, false, false, false]
    );
}

#[test]
fn empty_route_cannot_close() {
    let inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    let m = env.feasible_mask(&s);
    assert!(!m[0]);
    assert!(m[3] && m[4] && m[5]);
    assert!(!m[1] && !m[2]);
}

#[test]
fn capacity_masks_large_demand() {
    let inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    let (s, _) = env.step(&s, 3).unwrap(); // customer 1, load 4 of 10
    assert_eq!(s.remaining_capacity, 6.0);
    let m = env.feasible_mask(&s);
    assert!(!m[4], "customer 2 demands 7 > 6");
    assert!(m[5] && m[0]);
}

#[test]
fn rewards_per_action_kind() {
    let inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    let (s, out) = env.step(&env.reset(), 1).unwrap();
    assert_eq!(out.reward, -0.2);
    let (s, out) = env.step(&s, 3).unwrap();
    assert!((out.reward + 0.5).abs() < 1e-15);
    let (_, out) = env.step(&s, 0).unwrap();
    assert!((out.reward + 0.5).abs() < 1e-15);

    let open = small(VariantFlags::OPEN);
    let env = Env::new(&open);
    let (s, _) = env.step(&env.reset(), 2).unwrap();
    let (s, _) = env.step(&s, 4).unwrap();
    let (_, out) = env.step(&s, 0).unwrap();
    assert_eq!(out.reward, 0.0);
}

#[test]
fn masked_action_is_a_contract_error() {
    let inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    assert!(matches!(env.step(&env.reset(), 0), Err(Error::Contract(_))));
    assert!(matches!(env.step(&env.reset(), 3), Err(Error::Contract(_))));
    assert!(matches!(env.step(&env.reset(), 99), Err(Error::Contract(_))));
}

#[test]
fn backhauls_wait_for_reachable_linehauls() {
    let mut inst = small(VariantFlags::BACKHAUL);
    inst.nodes[3].q_l = 0.0;
    inst.nodes[3].q_b = 2.0;
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 2).unwrap();
    let m = env.feasible_mask(&s);
    assert!(m[3] && m[4] && !m[5], "backhaul 3 masked while linehauls fit");

    // Once no linehaul fits the active vehicle, the backhaul opens up.
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    let (s, _) = env.step(&s, 4).unwrap(); // customer 2, load 7 of 10; customer 1 needs 4
    let m = env.feasible_mask(&s);
    assert!(!m[3] && m[5]);
    let (s, _) = env.step(&s, 5).unwrap();
    assert!(s.route_has_backhaul);
    assert_eq!(s.used_backhaul, 2.0);
}

#[test]
fn time_window_masks_late_arrival() {
    let mut inst = small(VariantFlags::TIME_WINDOWS);
    inst.nodes[2].l = 0.9; // depot→2 is exactly 1.0
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    assert!(!env.feasible_mask(&s)[4]);
    inst.nodes[2].l = 1.0;
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    assert!(env.feasible_mask(&s)[4]);
}

#[test]
fn depot_deadline_and_distance_lookahead() {
    let mut inst = small(VariantFlags::new(false, false, true, true));
    inst.depot_close = Some(1.9); // 0→2→0 takes 2.0
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    assert!(!env.feasible_mask(&s)[4]);

    let mut inst = small(VariantFlags::DISTANCE);
    inst.dist_limit = Some(1.99);
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    assert!(!env.feasible_mask(&s)[4]);
    // Without the return leg the same customer fits.
    let inst = inst.with_variant(VariantFlags::new(true, false, true, false));
    let env = Env::new(&inst);
    let (s, _) = env.step(&env.reset(), 1).unwrap();
    assert!(env.feasible_mask(&s)[4]);
}

#[test]
fn penalty_single_customer_substitution() {
    let inst = Instance {
        variant: VariantFlags::CVRP,
        nodes: vec![node(0, 0.0, 0.0, 0.0), node(1, 0.3, 0.4, 1.0)],
        fleet: vec![vehicle(0, 10.0, 0.3, 2.0, 0), vehicle(1, 10.0, 0.1, 1.0, 0)],
        dist_limit: None,
        depot_close: None,
    };
    let env = Env::new(&inst);
    let mut s = env.reset();
    assert!(env.feasible_mask(&s).iter().all(|&m| !m));
    let p = env.penalty(&s).unwrap();
    assert!((p - (-2.3)).abs() < 1e-12, "{p}");
    let out = env.terminate_infeasible(&mut s).unwrap();
    assert!(out.done && out.infeasible && s.done);
}

#[test]
fn penalty_two_customers_term_by_term() {
    let mut inst = small(VariantFlags::CVRP);
    inst.fleet[0].count = 1;
    inst.fleet[1].count = 0;
    let env = Env::new(&inst);
    let mut s = env.reset();
    for a in [1, 5, 0] {
        env.step_mut(&mut s, a).unwrap();
    }
    assert!(env.feasible_mask(&s).iter().all(|&m| !m));
    let (ac, fc) = (2.0, 0.3);
    let expected = -((ac * (0.5 + 0.5) + fc) + (ac * (1.0 + 1.0) + fc));
    assert!((env.penalty(&s).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn penalty_preconditions() {
    let inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    assert!(matches!(env.penalty(&env.reset()), Err(Error::Contract(_))));
    let mut big = small(VariantFlags::CVRP);
    big.fleet[1].count = 2;
    let env = Env::new(&big);
    let mut s = env.reset();
    for a in [2, 3, 4, 5, 0] {
        env.step_mut(&mut s, a).unwrap();
    }
    assert!(s.done);
    assert!(matches!(env.penalty(&s), Err(Error::Contract(_))));
}

#[test]
fn decode_examples() {
    let mut inst = small(VariantFlags::CVRP);
    inst.nodes.truncate(3);
    let env = Env::new(&inst);
    let t = env.replay(&[1, 3, 4, 0]).unwrap_err();
    assert!(matches!(t, Error::Contract(_)), "4 + 7 > 10 on type 0");
    let t = env.replay(&[2, 3, 4, 0]).unwrap();
    let sol = decode_solution(&t, &inst).unwrap();
    assert_eq!(sol.routes.len(), 1);
    assert_eq!(
        (
            sol.routes[0].vehicle_type,
            sol.routes[0].customers.clone(),
            sol.routes[0].closed
        ),
        (1, vec![1, 2], true)
    );

    let t = env.replay(&[1, 3, 0, 2, 4, 0]).unwrap();
    let sol = decode_solution(&t, &inst).unwrap();
    assert_eq!(sol.routes.len(), 2);
    assert_ne!(sol.routes[0].vehicle_type, sol.routes[1].vehicle_type);
    assert!(check_feasibility(&sol, &inst).is_empty());
}

#[test]
fn replay_rejects_incomplete_and_overlong() {
    let inst = small(VariantFlags::CVRP);
    let env = Env::new(&inst);
    assert!(matches!(env.replay(&[2, 3]), Err(Error::Decode(_))));
    let full = [2, 3, 4, 5, 0];
    assert!(env.replay(&full).is_ok());
    assert!(matches!(env.replay(&[2, 3, 4, 5, 0, 1]), Err(Error::Decode(_))));
}

#[test]
fn open_route_return_legs_account_for_cost_difference() {
    let inst = small(VariantFlags::CVRP);
    let open = inst.with_variant(VariantFlags::OPEN);
    let actions = [1, 3, 0, 2, 5, 4, 0];
    let closed_sol = decode_solution(&Env::new(&inst).replay(&actions).unwrap(), &inst).unwrap();
    let open_sol = decode_solution(&Env::new(&open).replay(&actions).unwrap(), &open).unwrap();
    let diff = evaluate_cost(&closed_sol, &inst).unwrap() - evaluate_cost(&open_sol, &open).unwrap();
    let expected = 1.0 * inst.dist(1, 0) + 2.0 * inst.dist(2, 0);
    assert!((diff - expected).abs() < 1e-12);
}

#[test]
fn random_rollouts_are_sound_and_cost_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut feasible = 0;
    for seed in 0..2_000u64 {
        let variant = VariantFlags::BASIC[(seed % 5) as usize];
        let inst = generate_instance(&GeneratorConfig::new(2 + (seed % 9) as usize, 4, 2, variant, seed)).unwrap();
        let env = Env::new(&inst);
        let mut states = Vec::new();
        let traj = run_episode(&env, |s, m| {
            states.push(s.clone());
            Ok(random_choice(&mut rng, m))
        })
        .unwrap();
        for w in states.windows(2) {
            assert!(w[0].visited.iter().zip(&w[1].visited).all(|(a, b)| !a || *b));
            assert!(w[1].remaining_capacity >= 0.0);
            assert_eq!(w[1].served_count, w[1].visited.iter().filter(|v| **v).count());
        }
        if traj.infeasible {
            continue;
        }
        feasible += 1;
        let sol = decode_solution(&traj, &inst).unwrap();
        assert_eq!(check_feasibility(&sol, &inst), vec![]);
        let cost = evaluate_cost(&sol, &inst).unwrap();
        assert!((traj.total_reward + cost).abs() <= 1e-9);
    }
    assert!(feasible > 1_000);
}
