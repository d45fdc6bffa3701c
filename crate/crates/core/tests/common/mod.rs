//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vap::autodiff::Matrix;
use vap::instance::{generate_instance, GeneratorConfig, Instance, VariantFlags};
use vap::policy::{DecodeMode, ModelParams, PolicyContext, PolicyRollout};
use vap::training::{policy_gradient_loss, shared_baseline, Group, LossOutput};

pub const ALL_FLAGS: VariantFlags = VariantFlags::new(true, true, true, true);

pub fn tiny(n: usize, fleet: u32, types: usize, variant: VariantFlags, seed: u64) -> Instance {
    generate_instance(&GeneratorConfig::new(n, fleet, types, variant, seed)).unwrap()
}

/// Default initialization with every gain and bias moved off its neutral
/// value, so that no parameter has a structurally zero gradient.
pub fn jittered(params: &ModelParams, seed: u64) -> ModelParams {
    let mut p = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in p.tensors_mut() {
        let is_affine = t.name.ends_with(".gain")
            || t.name.ends_with(".bias")
            || t.name.ends_with(".b_a")
            || t.name.ends_with(".b_b");
        for v in t.value.data_mut() {
            if is_affine {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }
    p
}

/// Sampled trajectories of one instance with their shared-baseline advantages.
pub struct Sampled {
    pub instance: Instance,
    pub rollouts: Vec<PolicyRollout>,
    pub advantages: Vec<f64>,
}

pub fn sample(params: &ModelParams, instances: Vec<Instance>, samples: usize, seed: u64) -> Vec<Sampled> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    instances
        .into_iter()
        .map(|instance| {
            let rollouts: Vec<PolicyRollout> = {
                let mut ctx = PolicyContext::new(params, &instance).unwrap();
                (0..samples)
                    .map(|_| ctx.rollout(DecodeMode::Sample, &mut rng).unwrap())
                    .collect()
            };
            let rewards: Vec<f64> = rollouts.iter().map(|r| r.trajectory.total_reward).collect();
            let (_, advantages) = shared_baseline(&rewards);
            Sampled {
                instance,
                rollouts,
                advantages,
            }
        })
        .collect()
}

pub fn no_detach(batch: &[Sampled]) -> Vec<Vec<Vec<bool>>> {
    batch
        .iter()
        .map(|s| s.rollouts.iter().map(|r| vec![false; r.steps.len()]).collect())
        .collect()
}

pub fn loss(params: &ModelParams, batch: &[Sampled], detach: &[Vec<Vec<bool>>], sigma: f64) -> LossOutput {
    let groups: Vec<Group<'_>> = batch
        .iter()
        .zip(detach)
        .map(|(s, d)| Group {
            instance: &s.instance,
            rollouts: &s.rollouts,
            advantages: &s.advantages,
            detach: d,
        })
        .collect();
    policy_gradient_loss(params, &groups, sigma).unwrap()
}

/// Central finite differences of the batch loss, one matrix per tensor.
pub fn finite_differences(
    params: &ModelParams,
    batch: &[Sampled],
    detach: &[Vec<Vec<bool>>],
    sigma: f64,
    h: f64,
) -> Vec<Matrix> {
    let mut p = params.clone();
    let mut out = Vec::new();
    for ti in 0..params.tensors().len() {
        let shape = params.tensors()[ti].value.shape();
        let mut g = Matrix::zeros(shape.0, shape.1);
        for j in 0..g.data().len() {
            let x = params.tensors()[ti].value.data()[j];
            p.tensors_mut()[ti].value.data_mut()[j] = x + h;
            let up = loss(&p, batch, detach, sigma).loss;
            p.tensors_mut()[ti].value.data_mut()[j] = x - h;
            let down = loss(&p, batch, detach, sigma).loss;
            p.tensors_mut()[ti].value.data_mut()[j] = x;
            g.data_mut()[j] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the plain difference norm when both
/// tensors are below `floor` in norm.
pub fn relative_error(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a.norm_sq().sqrt().max(b.norm_sq().sqrt());
    if scale < floor {
        diff
    } else {
        diff / scale
    }
}

/// Travel and fixed cost of routes given as `(type, customers)`, computed
/// from coordinates alone.
pub fn direct_cost(inst: &Instance, routes: &[(usize, Vec<usize>)]) -> f64 {
    let d = |a: usize, b: usize| {
        let (p, q) = (&inst.nodes[a], &inst.nodes[b]);
        ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
    };
    routes
        .iter()
        .map(|(k, cs)| {
            let v = &inst.fleet[*k];
            let mut len = 0.0;
            let mut at = 0;
            for &c in cs {
                len += d(at, c);
                at = c;
            }
            if !inst.variant.phi_o {
                len += d(at, 0);
            }
            v.fixed_cost + v.unit_cost * len
        })
        .sum()
}

/// Every assignment of customers to ordered routes and of routes to vehicle
/// types within the fleet counts, feasible or not. Independent of the
/// environment.
pub fn all_solutions(inst: &Instance, mut visit: impl FnMut(vap::solution::Solution)) {
    fn partitions(j: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if j > n {
            out.push(cur.clone());
            return;
        }
        for r in 0..cur.len() {
            for pos in 0..=cur[r].len() {
                cur[r].insert(pos, j);
                partitions(j + 1, n, cur, out);
                cur[r].remove(pos);
            }
        }
        cur.push(vec![j]);
        partitions(j + 1, n, cur, out);
        cur.pop();
    }
    fn types(i: usize, routes: &[Vec<usize>], left: &mut [u32], cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i == routes.len() {
            f(cur);
            return;
        }
        for k in 0..left.len() {
            if left[k] > 0 {
                left[k] -= 1;
                cur.push(k);
                types(i + 1, routes, left, cur, f);
                cur.pop();
                left[k] += 1;
            }
        }
    }
    let mut sets = Vec::new();
    partitions(1, inst.n_customers(), &mut Vec::new(), &mut sets);
    let mut left: Vec<u32> = inst.fleet.iter().map(|v| v.count).collect();
    for routes in sets {
        types(0, &routes, &mut left, &mut Vec::new(), &mut |ks| {
            let tagged: Vec<(usize, Vec<usize>)> = ks.iter().copied().zip(routes.iter().cloned()).collect();
            visit(vap::solution::Solution {
                objective: direct_cost(inst, &tagged),
                routes: tagged
                    .into_iter()
                    .map(|(vehicle_type, customers)| vap::solution::Route {
                        vehicle_type,
                        customers,
                        closed: !inst.variant.phi_o,
                    })
                    .collect(),
                feasible: true,
            });
        });
    }
}
