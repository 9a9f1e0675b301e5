//! Seeded synthetic cities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::city::{DependencyEdge, Dataset, ItemId, RoadEdge, Status, Unit, UnitKind};

use super::PlannerError;

/// Relative frequency and base population of each building category.
const KIND_PROFILE: [(UnitKind, u32, u64); 13] = [
    (UnitKind::Hospital, 3, 2000),
    (UnitKind::CollegeSchool, 6, 1500),
    (UnitKind::Residential, 20, 800),
    (UnitKind::PublicPoint, 6, 600),
    (UnitKind::Religious, 5, 400),
    (UnitKind::PublicBuilding, 6, 700),
    (UnitKind::BusinessCenter, 8, 900),
    (UnitKind::GymCenter, 4, 300),
    (UnitKind::BanquetHall, 3, 250),
    (UnitKind::PrivateBuilding, 16, 200),
    (UnitKind::Museum, 3, 350),
    (UnitKind::BarCinema, 6, 300),
    (UnitKind::OtherPlace, 14, 100),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub units: usize,
    /// Fraction of buildings damaged; the count is rounded, not sampled.
    pub damage_rate: f64,
    /// Chance that a damaged building declares an extra dependency.
    pub dependency_rate: f64,
    pub seed: u64,
    /// Fraction of road segments damaged.
    pub road_damage_rate: f64,
    /// Extra roads beyond the spanning tree, per unit.
    pub extra_road_rate: f64,
    /// Side of the square the units are scattered over.
    pub extent: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            units: 20,
            damage_rate: 37.0 / 133.0,
            dependency_rate: 0.2,
            seed: 0,
            road_damage_rate: 20.0 / 150.0,
            extra_road_rate: 0.135,
            extent: 10.0,
        }
    }
}

/// Connected random city with `round(units * damage_rate)` damaged
/// buildings and acyclic declared dependencies.
pub fn generate_instance(
    units: usize,
    damage_rate: f64,
    dependency_rate: f64,
    seed: u64,
) -> Result<Dataset, PlannerError> {
    GeneratorConfig {
        units,
        damage_rate,
        dependency_rate,
        seed,
        ..Default::default()
    }
    .generate()
}

fn rate_ok(r: f64) -> bool {
    (0.0..=1.0).contains(&r)
}

impl GeneratorConfig {
    pub fn generate(&self) -> Result<Dataset, PlannerError> {
        let bad = |m: String| Err(PlannerError::InvalidRequest(m));
        if self.units == 0 {
            return bad("units must be positive".into());
        }
        for (name, r) in [
            ("damage rate", self.damage_rate),
            ("dependency rate", self.dependency_rate),
            ("road damage rate", self.road_damage_rate),
        ] {
            if !rate_ok(r) {
                return bad(format!("{name} {r} outside [0, 1]"));
            }
        }
        if !(self.extra_road_rate.is_finite() && self.extra_road_rate >= 0.0) {
            return bad(format!("extra road rate {} must be non-negative", self.extra_road_rate));
        }
        if !(self.extent.is_finite() && self.extent > 0.0) {
            return bad(format!("extent {} must be positive", self.extent));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.units;
        let width = (n as f64).log10().ceil().max(1.0) as usize;
        let name = |i: usize| format!("u{:0width$}", i + 1);

        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x = rng.gen_range(0.0..self.extent);
                let y = rng.gen_range(0.0..self.extent);
                ((x * 100.0).round() / 100.0, (y * 100.0).round() / 100.0)
            })
            .collect();
        let dist = |a: usize, b: usize| {
            let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
            ((dx * dx + dy * dy).sqrt() * 100.0).round().max(1.0) / 100.0
        };

        let damaged_count = (n as f64 * self.damage_rate).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut damaged = vec![false; n];
        for &i in &order[..damaged_count] {
            damaged[i] = true;
        }

        let total_weight: u32 = KIND_PROFILE.iter().map(|k| k.1).sum();
        let mut unit_list = Vec::with_capacity(n);
        for i in 0..n {
            let mut pick = rng.gen_range(0..total_weight);
            let &(kind, _, base) = KIND_PROFILE
                .iter()
                .find(|k| {
                    if pick < k.1 {
                        true
                    } else {
                        pick -= k.1;
                        false
                    }
                })
                .unwrap();
            let benefit = (base as f64 * rng.gen_range(0.5..1.5)).round() as u64;
            let (vulnerability, cost, time) = if damaged[i] {
                (
                    rng.gen_range(0..=3u8),
                    (rng.gen_range(10_000.0..40_000.0f64) / 100.0).round() * 100.0,
                    (rng.gen_range(3.0..18.0f64) * 2.0).round() / 2.0,
                )
            } else {
                (rng.gen_range(4..=5u8), 0.0, 0.0)
            };
            let mut unit = Unit::new(name(i), kind, vulnerability)
                .with_cost_time(cost, time)
                .with_benefit(benefit);
            unit.x = Some(points[i].0);
            unit.y = Some(points[i].1);
            unit_list.push(unit);
        }

        // spanning tree: each unit joins its nearest predecessor
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for i in 1..n {
            let j = (0..i)
                .min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)))
                .unwrap();
            edges.push((j, i));
        }
        let connected = |edges: &[(usize, usize)], a: usize, b: usize| {
            edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
        };
        let extra = (n as f64 * self.extra_road_rate).round() as usize;
        for _ in 0..extra {
            let a = rng.gen_range(0..n);
            let nearest = (0..n)
                .filter(|&b| b != a && !connected(&edges, a, b))
                .min_by(|&x, &y| dist(a, x).total_cmp(&dist(a, y)).then(x.cmp(&y)));
            if let Some(b) = nearest {
                edges.push((a.min(b), a.max(b)));
            }
        }

        let road_damage = (edges.len() as f64 * self.road_damage_rate).round() as usize;
        let mut road_order: Vec<usize> = (0..edges.len()).collect();
        road_order.shuffle(&mut rng);
        let mut road_damaged = vec![false; edges.len()];
        for &k in &road_order[..road_damage] {
            road_damaged[k] = true;
        }
        let roads: Vec<RoadEdge> = edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| {
                let road = RoadEdge::new(name(a), name(b), dist(a, b));
                if road_damaged[k] {
                    road.damaged(
                        (rng.gen_range(5_000.0..20_000.0f64) / 100.0).round() * 100.0,
                        (rng.gen_range(1.0..6.0f64) * 2.0).round() / 2.0,
                    )
                } else {
                    road
                }
            })
            .collect();

        // declared dependencies only point backwards in a random order of
        // the damaged items, so they cannot form a cycle
        let mut damaged_items: Vec<ItemId> = (0..n)
            .filter(|&i| damaged[i])
            .map(|i| ItemId::new(name(i)))
            .chain(
                roads
                    .iter()
                    .filter(|r| r.status == Status::Damaged)
                    .map(RoadEdge::id),
            )
            .collect();
        damaged_items.shuffle(&mut rng);
        let mut dependencies = Vec::new();
        for (pos, item) in damaged_items.iter().enumerate() {
            let is_building = unit_list.iter().any(|u| u.id == *item);
            if pos == 0 || !is_building || !rng.gen_bool(self.dependency_rate) {
                continue;
            }
            let blocker = &damaged_items[rng.gen_range(0..pos)];
            dependencies.push(DependencyEdge::new(item.as_str(), blocker.as_str()));
        }

        Ok(Dataset::new(unit_list, roads, dependencies, 1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::build_dependency_graph;

    #[test]
    fn full_scale_damage_count() {
        let ds = generate_instance(133, 37.0 / 133.0, 0.2, 11).unwrap();
        assert_eq!(ds.unit_count(), 133);
        let damaged = ds.units().filter(|u| u.status == Status::Damaged).count();
        assert_eq!(damaged, 37);
        assert_eq!(ds.roads().len(), 132 + 18);
        assert_eq!(ds.roads().iter().filter(|r| r.status == Status::Damaged).count(), 20);
    }

    #[test]
    fn zero_damage_is_intact() {
        let mut cfg = GeneratorConfig {
            units: 30,
            damage_rate: 0.0,
            road_damage_rate: 0.0,
            seed: 3,
            ..Default::default()
        };
        assert!(!cfg.generate().unwrap().has_damage());
        cfg.damage_rate = 1.5;
        assert!(cfg.generate().is_err());
        assert!(generate_instance(0, 0.5, 0.5, 1).is_err());
    }

    #[test]
    fn same_seed_same_city() {
        let a = generate_instance(25, 0.4, 0.3, 9).unwrap();
        let b = generate_instance(25, 0.4, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_instance(25, 0.4, 0.3, 10).unwrap());
    }

    #[test]
    fn generated_cities_are_connected_and_acyclic() {
        for seed in 0..20 {
            let ds = generate_instance(15, 0.5, 0.8, seed).unwrap();
            let n = ds.unit_count();
            let ids: Vec<&str> = ds.units().map(|u| u.id.as_str()).collect();
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for r in ds.roads() {
                    let (a, b) = (r.from.as_str(), r.to.as_str());
                    for (x, y) in [(a, b), (b, a)] {
                        if x == ids[i] {
                            let j = ids.iter().position(|id| *id == y).unwrap();
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            assert!(seen.iter().all(|s| *s), "seed {seed}");
            assert!(build_dependency_graph(&ds).is_acyclic());
        }
    }
}
