use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance, Instance, Node, VariantFlags, VehicleType};
use crate::error::{Error, Result};

fn variant_or_string<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<VariantFlags, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Flags(VariantFlags),
    }
    match Repr::deserialize(d)? {
        Repr::Text(s) => VariantFlags::parse(&s).map_err(serde::de::Error::custom),
        Repr::Flags(f) => Ok(f),
    }
}

/// Synthetic instance distribution. Every quantity is sampled in a fixed
/// order regardless of the variant flags, so one seed yields the same
/// coordinates and demands under every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_customers: usize,
    pub fleet_size: u32,
    pub n_vehicle_types: usize,
    /// Either a flag table or a string such as `"o+tw"`.
    #[serde(deserialize_with = "variant_or_string")]
    pub variant: VariantFlags,
    pub seed: u64,
    /// Integer demands are drawn uniformly from `demand_min..=demand_max`.
    pub demand_min: u32,
    pub demand_max: u32,
    pub capacity_choices: Vec<f64>,
    /// `fc = base_fixed_cost · Q/Qmax + U(0, fixed_cost_noise)`.
    pub base_fixed_cost: f64,
    pub fixed_cost_noise: f64,
    /// `ac = base_unit_cost · (Q/Qmax)^unit_cost_exponent`.
    pub base_unit_cost: f64,
    pub unit_cost_exponent: f64,
    pub backhaul_fraction: f64,
    /// Depot closing time `l0`; also the nominal horizon without windows.
    pub horizon: f64,
    pub service_min: f64,
    pub service_max: f64,
    pub window_min: f64,
    pub window_max: f64,
    /// `limit = 1.05 · 2 · max c0i + U(0, dist_limit_slack)`.
    pub dist_limit_slack: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_customers: 10,
            fleet_size: 3,
            n_vehicle_types: 3,
            variant: VariantFlags::CVRP,
            seed: 0,
            demand_min: 1,
            demand_max: 9,
            capacity_choices: vec![30.0, 40.0, 50.0],
            base_fixed_cost: 0.2,
            fixed_cost_noise: 0.02,
            base_unit_cost: 1.0,
            unit_cost_exponent: 0.7,
            backhaul_fraction: 0.2,
            horizon: 4.6,
            service_min: 0.15,
            service_max: 0.18,
            window_min: 0.18,
            window_max: 0.2,
            dist_limit_slack: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn new(n_customers: usize, fleet_size: u32, n_vehicle_types: usize, variant: VariantFlags, seed: u64) -> Self {
        Self {
            n_customers,
            fleet_size,
            n_vehicle_types,
            variant,
            seed,
            ..Self::default()
        }
    }

    /// Reads a configuration from TOML; absent keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_customers < 1 {
            return bad("n_customers must be at least 1".into());
        }
        if self.fleet_size < 1 {
            return bad("fleet_size must be at least 1".into());
        }
        if self.n_vehicle_types < 1 {
            return bad("n_vehicle_types must be at least 1".into());
        }
        if self.n_vehicle_types > self.fleet_size as usize {
            return bad(format!(
                "n_vehicle_types ({}) exceeds fleet_size ({})",
                self.n_vehicle_types, self.fleet_size
            ));
        }
        if self.demand_min < 1 || self.demand_min > self.demand_max {
            return bad("demand range must satisfy 1 <= demand_min <= demand_max".into());
        }
        if self.capacity_choices.is_empty() || self.capacity_choices.iter().any(|&q| q <= 0.0) {
            return bad("capacity_choices must be non-empty and positive".into());
        }
        if self.demand_max as f64 > self.capacity_choices.iter().cloned().fold(f64::MAX, f64::min) {
            return bad("demand_max exceeds the smallest capacity".into());
        }
        if !(0.0..=1.0).contains(&self.backhaul_fraction) {
            return bad("backhaul_fraction must lie in [0, 1]".into());
        }
        if self.base_unit_cost <= 0.0 || self.base_fixed_cost < 0.0 || self.fixed_cost_noise < 0.0 {
            return bad("costs must be non-negative (unit cost positive)".into());
        }
        if self.service_min > self.service_max || self.window_min > self.window_max {
            return bad("service and window ranges must be ordered".into());
        }
        // Farthest depot round trip in the unit square plus the widest service.
        if self.horizon < 2.0 * std::f64::consts::SQRT_2 + self.service_max + self.window_max {
            return bad("horizon too short to guarantee reachable windows".into());
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Samples an instance. Deterministic in `cfg` (including its seed).
pub fn generate_instance(cfg: &GeneratorConfig) -> Result<Instance> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_customers;

    let depot_loc = [rng.gen::<f64>(), rng.gen::<f64>()];
    let locs: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let demands: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(cfg.demand_min..=cfg.demand_max) as f64)
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_backhaul = (cfg.backhaul_fraction * n as f64).round() as usize;
    let mut is_backhaul = vec![false; n];
    for &i in &order[..n_backhaul] {
        is_backhaul[i] = true;
    }

    let mut services = Vec::with_capacity(n);
    let mut windows = Vec::with_capacity(n);
    for loc in &locs {
        let c0 = distance(depot_loc, *loc);
        let s = uniform(&mut rng, cfg.service_min, cfg.service_max);
        let w = uniform(&mut rng, cfg.window_min, cfg.window_max);
        let lo = (c0 - w).max(0.0);
        let hi = (cfg.horizon - c0 - s - w).max(lo);
        let e = uniform(&mut rng, lo, hi);
        services.push(s);
        windows.push((e, e + w));
    }

    let max_c0 = locs.iter().map(|l| distance(depot_loc, *l)).fold(0.0, f64::max);
    let dist_limit = 1.05 * 2.0 * max_c0 + uniform(&mut rng, 0.0, cfg.dist_limit_slack);

    let v = cfg.n_vehicle_types;
    let mut capacities: Vec<f64> = if v <= cfg.capacity_choices.len() {
        cfg.capacity_choices.choose_multiple(&mut rng, v).cloned().collect()
    } else {
        (0..v)
            .map(|_| *cfg.capacity_choices.choose(&mut rng).expect("non-empty"))
            .collect()
    };
    capacities.sort_by(f64::total_cmp);
    let q_max = capacities.iter().cloned().fold(0.0, f64::max);
    let k = cfg.fleet_size as usize;
    let fleet: Vec<VehicleType> = capacities
        .iter()
        .enumerate()
        .map(|(id, &q)| {
            let ratio = q / q_max;
            let noise = uniform(&mut rng, 0.0, cfg.fixed_cost_noise);
            VehicleType {
                id,
                capacity: q,
                fixed_cost: cfg.base_fixed_cost * ratio + noise,
                unit_cost: cfg.base_unit_cost * ratio.powf(cfg.unit_cost_exponent),
                count: (k / v + usize::from(id < k % v)) as u32,
            }
        })
        .collect();

    let tw = cfg.variant.phi_tw;
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(Node {
        id: 0,
        x: depot_loc[0],
        y: depot_loc[1],
        q_l: 0.0,
        q_b: 0.0,
        e: 0.0,
        l: cfg.horizon,
        s: 0.0,
    });
    for i in 0..n {
        let backhaul = cfg.variant.phi_b && is_backhaul[i];
        let (e, l) = if tw { windows[i] } else { (0.0, cfg.horizon) };
        nodes.push(Node {
            id: i + 1,
            x: locs[i][0],
            y: locs[i][1],
            q_l: if backhaul { 0.0 } else { demands[i] },
            q_b: if backhaul { demands[i] } else { 0.0 },
            e,
            l,
            s: if tw { services[i] } else { 0.0 },
        });
    }

    Ok(Instance {
        variant: cfg.variant,
        nodes,
        fleet,
        dist_limit: cfg.variant.phi_l.then_some(dist_limit),
        depot_close: tw.then_some(cfg.horizon),
    })
}
