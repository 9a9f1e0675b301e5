//! Instances shipped with the crate for examples, tests and benchmarks.

use crate::city::{Dataset, RoadEdge, Unit, UnitKind};

use super::generate::GeneratorConfig;

/// Six buildings around a town hall. The riverside district and the
/// hospital behind it are cut off by a collapsed road; five buildings and
/// that road are damaged, together costing more than 100 000.
pub fn six_unit_instance() -> Dataset {
    let units = vec![
        Unit::new("town_hall", UnitKind::PublicBuilding, 5).with_benefit(500),
        Unit::new("market", UnitKind::BusinessCenter, 2)
            .with_cost_time(20_000.0, 8.0)
            .with_benefit(900),
        Unit::new("school", UnitKind::CollegeSchool, 1)
            .with_cost_time(30_000.0, 10.0)
            .with_benefit(1500),
        Unit::new("riverside", UnitKind::Residential, 0)
            .with_cost_time(25_000.0, 12.0)
            .with_benefit(800),
        Unit::new("hospital", UnitKind::Hospital, 0)
            .with_cost_time(40_000.0, 14.0)
            .with_benefit(2000),
        Unit::new("bar", UnitKind::BarCinema, 3)
            .with_cost_time(30_000.0, 6.0)
            .with_benefit(100),
    ];
    let roads = vec![
        RoadEdge::new("town_hall", "market", 1.0),
        RoadEdge::new("town_hall", "school", 1.5),
        RoadEdge::new("town_hall", "riverside", 2.0).damaged(15_000.0, 6.0),
        RoadEdge::new("riverside", "hospital", 1.0),
        RoadEdge::new("market", "bar", 0.5),
    ];
    Dataset::new(units, roads, vec![], 1).expect("bundled instance is valid")
}

/// Seeded 20-unit synthetic city at the default damage ratio.
pub fn twenty_unit_instance() -> Dataset {
    GeneratorConfig {
        units: 20,
        dependency_rate: 0.25,
        seed: 0,
        ..Default::default()
    }
    .generate()
    .expect("bundled generator settings are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::build_dependency_graph;

    #[test]
    fn six_unit_shape() {
        let ds = six_unit_instance();
        assert_eq!(ds.unit_count(), 6);
        assert_eq!(ds.damaged_count(), 6);
        let g = build_dependency_graph(&ds);
        assert!(g.contains("hospital", "town_hall-riverside"));
        assert!(g.contains("riverside", "town_hall-riverside"));
    }

    #[test]
    fn twenty_unit_shape() {
        let ds = twenty_unit_instance();
        assert_eq!(ds.unit_count(), 20);
        let damaged = ds.units().filter(|u| u.status.is_damaged()).count();
        assert_eq!(damaged, 6);
    }
}
