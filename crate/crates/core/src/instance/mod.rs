//! Problem data: depot, customers, heterogeneous fleet and variant flags.

mod generator;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generator::{generate_instance, GeneratorConfig};
pub use validate::{validate_instance, InstanceViolation};

/// Which side constraints are active. Capacity is always active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantFlags {
    /// Open routes: no return leg.
    pub phi_o: bool,
    /// Backhauls with linehaul-before-backhaul precedence.
    pub phi_b: bool,
    /// Per-route distance limit.
    pub phi_l: bool,
    /// Hard time windows and depot closing time.
    pub phi_tw: bool,
}

impl VariantFlags {
    pub const CVRP: Self = Self::new(false, false, false, false);
    pub const OPEN: Self = Self::new(true, false, false, false);
    pub const BACKHAUL: Self = Self::new(false, true, false, false);
    pub const DISTANCE: Self = Self::new(false, false, true, false);
    pub const TIME_WINDOWS: Self = Self::new(false, false, false, true);

    /// The five single-constraint variants: C, O, B, L, TW.
    pub const BASIC: [Self; 5] = [
        Self::CVRP,
        Self::OPEN,
        Self::BACKHAUL,
        Self::DISTANCE,
        Self::TIME_WINDOWS,
    ];

    pub const fn new(phi_o: bool, phi_b: bool, phi_l: bool, phi_tw: bool) -> Self {
        Self {
            phi_o,
            phi_b,
            phi_l,
            phi_tw,
        }
    }

    /// `[φo, φb, φl, φtw]` as reals.
    pub fn as_vector(&self) -> [f64; 4] {
        let b = |f: bool| if f { 1.0 } else { 0.0 };
        [b(self.phi_o), b(self.phi_b), b(self.phi_l), b(self.phi_tw)]
    }

    /// Parses `c`, or any `+`/`,`-separated combination of `o`, `b`, `l`, `tw`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut flags = Self::CVRP;
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "c" | "cvrp" => {}
                "o" => flags.phi_o = true,
                "b" => flags.phi_b = true,
                "l" => flags.phi_l = true,
                "tw" => flags.phi_tw = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown variant flag `{other}` (expected c, o, b, l, tw)"
                    )))
                }
            }
        }
        Ok(flags)
    }
}

impl fmt::Display for VariantFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.phi_o {
            parts.push("o");
        }
        if self.phi_b {
            parts.push("b");
        }
        if self.phi_l {
            parts.push("l");
        }
        if self.phi_tw {
            parts.push("tw");
        }
        if parts.is_empty() {
            f.write_str("c")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

/// Depot (id 0) or customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Linehaul (delivery) demand.
    pub q_l: f64,
    /// Backhaul (pickup) demand.
    pub q_b: f64,
    /// Window open.
    pub e: f64,
    /// Window close.
    pub l: f64,
    /// Service duration.
    pub s: f64,
}

impl Node {
    pub fn loc(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_backhaul(&self) -> bool {
        self.q_b > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleType {
    pub id: usize,
    pub capacity: f64,
    pub fixed_cost: f64,
    /// Travel cost per unit distance.
    pub unit_cost: f64,
    /// Vehicles of this type available.
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub variant: VariantFlags,
    /// Depot first, then customers `1..=N`.
    pub nodes: Vec<Node>,
    pub fleet: Vec<VehicleType>,
    /// Route length bound; present iff `phi_l`.
    pub dist_limit: Option<f64>,
    /// Depot closing time; present iff `phi_tw`.
    pub depot_close: Option<f64>,
}

/// Euclidean distance.
#[inline]
pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

impl Instance {
    pub fn n_customers(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn n_types(&self) -> usize {
        self.fleet.len()
    }

    /// Total number of vehicles K.
    pub fn fleet_size(&self) -> u32 {
        self.fleet.iter().map(|v| v.count).sum()
    }

    pub fn depot(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn customers(&self) -> &[Node] {
        &self.nodes[1..]
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        distance(self.nodes[i].loc(), self.nodes[j].loc())
    }

    pub fn max_capacity(&self) -> f64 {
        self.fleet.iter().map(|v| v.capacity).fold(0.0, f64::max)
    }

    pub fn max_unit_cost(&self) -> f64 {
        self.fleet.iter().map(|v| v.unit_cost).fold(0.0, f64::max)
    }

    pub fn max_fixed_cost(&self) -> f64 {
        self.fleet.iter().map(|v| v.fixed_cost).fold(0.0, f64::max)
    }

    /// Same data under different variant flags. Limits that the new flags
    /// activate must already be present.
    pub fn with_variant(&self, variant: VariantFlags) -> Instance {
        let mut out = self.clone();
        out.variant = variant;
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_json_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(distance([0.0, 0.0], [0.0, 0.0]), 0.0);
        assert_eq!(distance([0.0, 0.0], [3.0, 4.0]), 5.0);
    }

    proptest! {
        #[test]
        fn distance_matches_direct_formula(ax in 0.0..1.0f64, ay in 0.0..1.0f64, bx in 0.0..1.0f64, by in 0.0..1.0f64) {
            let direct = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            prop_assert!((distance([ax, ay], [bx, by]) - direct).abs() <= 1e-12);
            prop_assert_eq!(distance([ax, ay], [bx, by]), distance([bx, by], [ax, ay]));
        }

        #[test]
        fn distance_triangle_inequality(p in prop::array::uniform6(0.0..1.0f64)) {
            let (a, b, c) = ([p[0], p[1]], [p[2], p[3]], [p[4], p[5]]);
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-15);
        }
    }

    #[test]
    fn variant_parse_and_display() {
        assert_eq!(VariantFlags::parse("c").unwrap(), VariantFlags::CVRP);
        assert_eq!(VariantFlags::parse("tw").unwrap(), VariantFlags::TIME_WINDOWS);
        let v = VariantFlags::parse("o+tw").unwrap();
        assert!(v.phi_o && v.phi_tw && !v.phi_b);
        assert_eq!(v.to_string(), "o+tw");
        assert!(VariantFlags::parse("x").is_err());
    }

    #[test]
    fn truncated_json_is_a_parse_error() {
        let inst = generate_instance(&GeneratorConfig::new(3, 2, 2, VariantFlags::CVRP, 1)).unwrap();
        let json = inst.to_json();
        let cut = &json[..json.len() / 2];
        match Instance::from_json(cut) {
            Err(Error::Parse { line, .. }) => assert!(line > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_minimal_and_large() {
        for (n, k) in [(1, 1), (50, 20)] {
            let inst = generate_instance(&GeneratorConfig::new(
                n,
                k,
                k.min(3) as usize,
                VariantFlags::TIME_WINDOWS,
                9,
            ))
            .unwrap();
            let back = Instance::from_json(&inst.to_json()).unwrap();
            assert_eq!(back, inst);
        }
    }
}
