//! Distances over the road network, the per-item social benefit and the
//! plan-level objective.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::city::{Dataset, ItemIndex};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{0}` appears twice in the plan")]
    DuplicateItem(String),
    #[error("mean priority of an empty plan is undefined")]
    EmptyPlan,
    #[error("weights must lie in [0, 1] and sum to 1, got alpha={alpha}, beta={beta}")]
    InvalidWeights { alpha: f64, beta: f64 },
    #[error("neighbourhood benefit fixpoint did not converge")]
    FixpointDiverged,
}

/// Mix between direct users and neighbourhood benefit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    alpha: f64,
    beta: f64,
}

impl ObjectiveWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MetricsError> {
        let ok = (0.0..=1.0).contains(&alpha)
            && (0.0..=1.0).contains(&beta)
            && (alpha + beta - 1.0).abs() <= 1e-12;
        if ok {
            Ok(ObjectiveWeights { alpha, beta })
        } else {
            Err(MetricsError::InvalidWeights { alpha, beta })
        }
    }

    pub fn from_alpha(alpha: f64) -> Result<Self, MetricsError> {
        Self::new(alpha, 1.0 - alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

/// How intact neighbours contribute to a damaged item's benefit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborBenefit {
    /// An intact neighbour contributes its direct users.
    #[default]
    OneLevel,
    /// Intact neighbours contribute their own neighbourhood-weighted benefit,
    /// solved as a fixpoint over the intact set.
    Fixpoint,
}

/// Which items count as intact when scoring later plan items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntactSet {
    /// Items intact at plan start only.
    #[default]
    Frozen,
    /// Items intact at plan start plus plan items already completed.
    Incremental,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BenefitConfig {
    pub weights: ObjectiveWeights,
    #[serde(default)]
    pub neighbor: NeighborBenefit,
    #[serde(default)]
    pub intact_set: IntactSet,
}

impl BenefitConfig {
    pub fn with_weights(weights: ObjectiveWeights) -> Self {
        BenefitConfig {
            weights,
            ..Default::default()
        }
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest road distances between items.
///
/// Units are graph nodes; a road item sits at its midpoint, half its length
/// from each endpoint. Every road is traversable for distance purposes,
/// damaged or not.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    index: ItemIndex,
    /// Shortest distances between all items in index order.
    dist: Vec<Vec<f64>>,
}

impl DistanceTable {
    pub fn new(dataset: &Dataset) -> Self {
        Self::from_index(ItemIndex::new(dataset))
    }

    pub fn from_index(index: ItemIndex) -> Self {
        let n = index.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, item) in index.items().iter().enumerate() {
            if let Some((from, to, length)) = &item.road {
                for end in [from, to] {
                    let e = index.get(end.as_str()).expect("validated endpoint");
                    adj[r].push((e, length / 2.0));
                    adj[e].push((r, length / 2.0));
                }
            }
        }
        let dist = (0..n).map(|s| dijkstra(&adj, s)).collect();
        DistanceTable { index, dist }
    }

    pub fn index(&self) -> &ItemIndex {
        &self.index
    }

    /// Distance by item index; `None` when the pair is disconnected.
    pub fn between(&self, a: usize, b: usize) -> Option<f64> {
        let d = self.dist[a][b];
        d.is_finite().then_some(d)
    }

    pub fn distance(&self, a: &str, b: &str) -> Result<Option<f64>, MetricsError> {
        let ia = self.lookup(a)?;
        let ib = self.lookup(b)?;
        Ok(self.between(ia, ib))
    }

    fn lookup(&self, id: &str) -> Result<usize, MetricsError> {
        self.index
            .get(id)
            .ok_or_else(|| MetricsError::UnknownItem(id.to_owned()))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry(0.0, source));
    while let Some(HeapEntry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(HeapEntry(nd, w));
            }
        }
    }
    dist
}

/// Shortest-path distance between two items; `Ok(None)` means unreachable.
pub fn distance(dataset: &Dataset, a: &str, b: &str) -> Result<Option<f64>, MetricsError> {
    DistanceTable::new(dataset).distance(a, b)
}

/// Per-item social benefit over one dataset snapshot.
#[derive(Debug, Clone)]
pub struct BenefitModel {
    table: DistanceTable,
    config: BenefitConfig,
    initially_intact: Vec<bool>,
    /// Benefit of every item against the start-of-plan intact set.
    frozen: Vec<f64>,
}

impl BenefitModel {
    pub fn new(dataset: &Dataset, config: BenefitConfig) -> Result<Self, MetricsError> {
        let table = DistanceTable::new(dataset);
        let initially_intact: Vec<bool> = table
            .index()
            .items()
            .iter()
            .map(|i| !i.status.is_damaged())
            .collect();
        let mut model = BenefitModel {
            table,
            config,
            initially_intact,
            frozen: Vec::new(),
        };
        model.frozen = model.benefits_for(&model.initially_intact.clone())?;
        Ok(model)
    }

    pub fn index(&self) -> &ItemIndex {
        self.table.index()
    }

    pub fn distances(&self) -> &DistanceTable {
        &self.table
    }

    pub fn config(&self) -> &BenefitConfig {
        &self.config
    }

    /// Benefits against the start-of-plan intact set, in index order.
    pub fn frozen(&self) -> &[f64] {
        &self.frozen
    }

    /// Benefit of every item given which items are currently intact.
    pub fn benefits_for(&self, intact: &[bool]) -> Result<Vec<f64>, MetricsError> {
        let items = self.index().items();
        let direct: Vec<f64> = items.iter().map(|i| i.direct_benefit as f64).collect();
        let support = match self.config.neighbor {
            NeighborBenefit::OneLevel => direct.clone(),
            NeighborBenefit::Fixpoint => self.fixpoint_support(intact, &direct)?,
        };
        Ok((0..items.len())
            .map(|v| {
                if intact[v] {
                    support[v]
                } else {
                    self.damaged_benefit(v, intact, &direct, &support)
                }
            })
            .collect())
    }

    fn neighbour_sum(&self, v: usize, intact: &[bool], support: &[f64]) -> f64 {
        let items = self.index().items();
        (0..items.len())
            .filter(|&u| u != v && intact[u] && items[u].road.is_none())
            .filter_map(|u| {
                self.table
                    .between(u, v)
                    .filter(|d| *d > 0.0)
                    .map(|d| support[u] / d)
            })
            .sum()
    }

    fn damaged_benefit(&self, v: usize, intact: &[bool], direct: &[f64], support: &[f64]) -> f64 {
        let w = self.config.weights;
        let neighbourhood = if w.beta() == 0.0 {
            0.0
        } else {
            self.neighbour_sum(v, intact, support)
        };
        w.alpha() * direct[v] + w.beta() * neighbourhood
    }

    fn fixpoint_support(&self, intact: &[bool], direct: &[f64]) -> Result<Vec<f64>, MetricsError> {
        const MAX_ITER: usize = 10_000;
        let w = self.config.weights;
        let mut s = direct.to_vec();
        for _ in 0..MAX_ITER {
            let next: Vec<f64> = (0..s.len())
                .map(|u| {
                    if intact[u] {
                        w.alpha() * direct[u] + w.beta() * self.neighbour_sum(u, intact, &s)
                    } else {
                        0.0
                    }
                })
                .collect();
            let delta = next
                .iter()
                .zip(&s)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                .fold(0.0, f64::max);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(MetricsError::FixpointDiverged);
            }
            s = next;
            if delta < 1e-12 {
                return Ok(s);
            }
        }
        Err(MetricsError::FixpointDiverged)
    }

    fn resolve_plan<S: AsRef<str>>(&self, plan: &[S]) -> Result<Vec<usize>, MetricsError> {
        let mut seen = HashSet::new();
        plan.iter()
            .map(|id| {
                let id = id.as_ref();
                let i = self
                    .index()
                    .get(id)
                    .ok_or_else(|| MetricsError::UnknownItem(id.to_owned()))?;
                if !seen.insert(i) {
                    return Err(MetricsError::DuplicateItem(id.to_owned()));
                }
                Ok(i)
            })
            .collect()
    }

    /// Benefit of each plan item at the moment it is completed.
    pub fn plan_item_benefits(&self, plan: &[usize]) -> Result<Vec<f64>, MetricsError> {
        match self.config.intact_set {
            IntactSet::Frozen => Ok(plan.iter().map(|&v| self.frozen[v]).collect()),
            IntactSet::Incremental => {
                let mut intact = self.initially_intact.clone();
                let mut out = Vec::with_capacity(plan.len());
                for &v in plan {
                    out.push(self.benefits_for(&intact)?[v]);
                    intact[v] = true;
                }
                Ok(out)
            }
        }
    }

    /// Scores an ordered plan given by item indices.
    pub fn evaluate_indices(&self, plan: &[usize], horizon: f64) -> Result<PlanEvaluation, MetricsError> {
        let items = self.index().items();
        let benefits = self.plan_item_benefits(plan)?;
        let mut clock = 0.0;
        let mut total_cost = 0.0;
        let mut social_benefit = 0.0;
        let mut completion_times = Vec::with_capacity(plan.len());
        let mut contributions = Vec::with_capacity(plan.len());
        for (&v, &s) in plan.iter().zip(&benefits) {
            clock += items[v].effective_time();
            total_cost += items[v].effective_cost();
            let c = s * (horizon - clock).max(0.0);
            social_benefit += c;
            completion_times.push(clock);
            contributions.push(c);
        }
        let mean_priority = (!plan.is_empty()).then(|| {
            plan.iter().map(|&v| items[v].priority as f64).sum::<f64>() / plan.len() as f64
        });
        Ok(PlanEvaluation {
            social_benefit,
            mean_priority,
            total_cost,
            total_duration: clock,
            completion_times,
            item_benefits: benefits,
            contributions,
        })
    }

    pub fn evaluate<S: AsRef<str>>(&self, plan: &[S], horizon: f64) -> Result<PlanEvaluation, MetricsError> {
        let plan = self.resolve_plan(plan)?;
        self.evaluate_indices(&plan, horizon)
    }
}

/// Scores of one ordered plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    /// Sum of item benefit times the part of the horizon left after the
    /// item's cumulative completion time.
    pub social_benefit: f64,
    /// Mean political priority; absent for an empty plan.
    pub mean_priority: Option<f64>,
    pub total_cost: f64,
    pub total_duration: f64,
    /// Cumulative completion time of each item under sequential execution.
    pub completion_times: Vec<f64>,
    /// Per-item benefit used in the objective.
    pub item_benefits: Vec<f64>,
    /// Per-item share of `social_benefit`.
    pub contributions: Vec<f64>,
}

/// Social benefit of a single item against the dataset's intact set.
pub fn unit_benefit(dataset: &Dataset, id: &str, weights: ObjectiveWeights) -> Result<f64, MetricsError> {
    let model = BenefitModel::new(dataset, BenefitConfig::with_weights(weights))?;
    let i = model
        .index()
        .get(id)
        .ok_or_else(|| MetricsError::UnknownItem(id.to_owned()))?;
    Ok(model.frozen()[i])
}

/// Evaluates an ordered plan against a horizon.
pub fn plan_benefit<S: AsRef<str>>(
    dataset: &Dataset,
    plan: &[S],
    horizon: f64,
    config: BenefitConfig,
) -> Result<PlanEvaluation, MetricsError> {
    BenefitModel::new(dataset, config)?.evaluate(plan, horizon)
}

/// Arithmetic mean of political priority over plan items, roads included.
pub fn mean_priority<S: AsRef<str>>(plan: &[S], dataset: &Dataset) -> Result<f64, MetricsError> {
    if plan.is_empty() {
        return Err(MetricsError::EmptyPlan);
    }
    let mut total = 0.0;
    for id in plan {
        let item = dataset
            .item(id.as_ref())
            .ok_or_else(|| MetricsError::UnknownItem(id.as_ref().to_owned()))?;
        total += item.priority as f64;
    }
    Ok(total / plan.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::{RoadEdge, Status, Unit, UnitKind};

    /// Three damaged units without roads: direct users are the whole benefit
    /// when alpha = 1.
    fn fig_two_city() -> Dataset {
        let units = vec![
            Unit::new("hospital", UnitKind::Hospital, 0)
                .with_cost_time(10.0, 2.0)
                .with_benefit(2000),
            Unit::new("school", UnitKind::CollegeSchool, 0)
                .with_cost_time(10.0, 1.5)
                .with_benefit(1000),
            Unit::new("cinema", UnitKind::BarCinema, 0)
                .with_cost_time(10.0, 1.0)
                .with_benefit(600),
        ];
        Dataset::new(units, vec![], vec![], 1).unwrap()
    }

    fn direct_only() -> BenefitConfig {
        BenefitConfig::with_weights(ObjectiveWeights::new(1.0, 0.0).unwrap())
    }

    #[test]
    fn plan_order_changes_benefit() {
        let ds = fig_two_city();
        let p1 = plan_benefit(&ds, &["hospital", "school", "cinema"], 6.0, direct_only()).unwrap();
        let p2 = plan_benefit(&ds, &["school", "cinema", "hospital"], 6.0, direct_only()).unwrap();
        assert_eq!(p1.social_benefit, 11400.0);
        assert_eq!(p2.social_benefit, 9600.0);
        assert_eq!(p1.completion_times, vec![2.0, 3.5, 4.5]);
        assert_eq!(p1.total_duration, 4.5);
        assert_eq!(p1.total_cost, 30.0);
        assert_eq!(p1.mean_priority, Some((10.0 + 9.0 + 2.0) / 3.0));

        let empty = plan_benefit::<&str>(&ds, &[], 6.0, direct_only()).unwrap();
        assert_eq!(empty.social_benefit, 0.0);
        assert_eq!(empty.mean_priority, None);
    }

    #[test]
    fn late_completion_contributes_nothing() {
        let ds = fig_two_city();
        let p = plan_benefit(&ds, &["hospital", "school", "cinema"], 3.0, direct_only()).unwrap();
        assert_eq!(p.contributions, vec![2000.0, 0.0, 0.0]);
    }

    #[test]
    fn malformed_plans_rejected() {
        let ds = fig_two_city();
        assert_eq!(
            plan_benefit(&ds, &["school", "school"], 6.0, direct_only()).unwrap_err(),
            MetricsError::DuplicateItem("school".into())
        );
        assert!(matches!(
            plan_benefit(&ds, &["mall"], 6.0, direct_only()),
            Err(MetricsError::UnknownItem(_))
        ));
    }

    /// Exhaustive simple-path enumeration over the road graph.
    fn shortest_by_enumeration(ds: &Dataset, a: &str, b: &str) -> Option<f64> {
        fn walk(at: &str, goal: &str, roads: &[RoadEdge], seen: &mut Vec<String>, len: f64, best: &mut Option<f64>) {
            if at == goal {
                *best = Some(best.map_or(len, |x: f64| x.min(len)));
                return;
            }
            for r in roads {
                let next = if r.from.as_str() == at {
                    r.to.as_str()
                } else if r.to.as_str() == at {
                    r.from.as_str()
                } else {
                    continue;
                };
                if !seen.iter().any(|s| s == next) {
                    seen.push(next.to_owned());
                    walk(next, goal, roads, seen, len + r.length, best);
                    seen.pop();
                }
            }
        }
        let mut best = None;
        walk(a, b, ds.roads(), &mut vec![a.to_owned()], 0.0, &mut best);
        best
    }

    fn line_city() -> Dataset {
        let units = ["A", "B", "C", "D", "E"]
            .iter()
            .map(|id| Unit::new(*id, UnitKind::Residential, 5).with_benefit(10))
            .collect();
        let roads = vec![
            RoadEdge::new("A", "B", 1.0),
            RoadEdge::new("B", "C", 2.0),
            RoadEdge::new("A", "C", 4.0),
            RoadEdge::new("C", "D", 0.5),
        ];
        Dataset::new(units, roads, vec![], 1).unwrap()
    }

    #[test]
    fn distances_match_path_enumeration() {
        let ds = line_city();
        let table = DistanceTable::new(&ds);
        assert_eq!(table.distance("A", "A").unwrap(), Some(0.0));
        assert_eq!(table.distance("A", "C").unwrap(), Some(3.0));
        for a in ["A", "B", "C", "D", "E"] {
            for b in ["A", "B", "C", "D", "E"] {
                assert_eq!(
                    table.distance(a, b).unwrap(),
                    shortest_by_enumeration(&ds, a, b),
                    "{a}->{b}"
                );
            }
        }
        assert_eq!(table.distance("A", "E").unwrap(), None);
        assert!(distance(&ds, "A", "Z").is_err());
        // a road item sits at its midpoint
        assert_eq!(table.distance("A", "C-D").unwrap(), Some(3.25));
    }

    #[test]
    fn unit_benefit_cases() {
        let units = vec![
            Unit::new("v", UnitKind::Residential, 0).with_benefit(10),
            Unit::new("u", UnitKind::Residential, 5).with_benefit(100),
            Unit::new("far", UnitKind::Residential, 5).with_benefit(1000),
            Unit::new("w", UnitKind::Residential, 0).with_benefit(40),
        ];
        let roads = vec![RoadEdge::new("v", "u", 2.0)];
        let ds = Dataset::new(units, roads, vec![], 1).unwrap();
        let half = ObjectiveWeights::default();
        assert_eq!(unit_benefit(&ds, "v", half).unwrap(), 0.5 * 10.0 + 0.5 * 50.0);
        let alpha = ObjectiveWeights::new(1.0, 0.0).unwrap();
        assert_eq!(unit_benefit(&ds, "w", alpha).unwrap(), 40.0);
        let seventy = ObjectiveWeights::from_alpha(0.7).unwrap();
        assert!((unit_benefit(&ds, "w", seventy).unwrap() - 7.0 * 4.0).abs() < 1e-12);
        // intact units report their direct users
        assert_eq!(unit_benefit(&ds, "u", half).unwrap(), 100.0);
    }

    #[test]
    fn neighbourhood_sum_matches_independent_summation() {
        let ds = line_city().apply_plan::<&str>(&[]).unwrap();
        let units: Vec<Unit> = ds
            .units()
            .map(|u| {
                let mut u = u.clone();
                if u.id.as_str() == "C" {
                    u.status = Status::Damaged;
                }
                u
            })
            .collect();
        let ds = Dataset::new(units, ds.roads().to_vec(), vec![], 1).unwrap();
        let w = ObjectiveWeights::new(0.3, 0.7).unwrap();
        let got = unit_benefit(&ds, "C", w).unwrap();
        // A at 3, B at 2, D at 0.5, E unreachable
        let expected = 0.3 * 10.0 + 0.7 * (10.0 / 3.0 + 10.0 / 2.0 + 10.0 / 0.5);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn weights_validated() {
        assert!(ObjectiveWeights::new(0.6, 0.6).is_err());
        assert!(ObjectiveWeights::new(-0.1, 1.1).is_err());
        assert!(ObjectiveWeights::new(0.25, 0.75).is_ok());
    }

    #[test]
    fn mean_priority_cases() {
        let units = vec![
            Unit::new("a", UnitKind::Hospital, 0),
            Unit::new("b", UnitKind::CollegeSchool, 0),
            Unit::new("c", UnitKind::PublicPoint, 0),
            Unit::new("d", UnitKind::PublicBuilding, 0),
        ];
        let ds = Dataset::new(units, vec![], vec![], 1).unwrap();
        assert_eq!(mean_priority(&["a", "b", "c"], &ds).unwrap(), 9.0);
        assert_eq!(mean_priority(&["d"], &ds).unwrap(), 7.0);
        assert_eq!(mean_priority::<&str>(&[], &ds).unwrap_err(), MetricsError::EmptyPlan);
    }

    #[test]
    fn incremental_mode_counts_completed_neighbours() {
        let units = vec![
            Unit::new("a", UnitKind::Residential, 0)
                .with_cost_time(1.0, 1.0)
                .with_benefit(100),
            Unit::new("b", UnitKind::Residential, 0)
                .with_cost_time(1.0, 1.0)
                .with_benefit(10),
        ];
        let ds = Dataset::new(units, vec![RoadEdge::new("a", "b", 1.0)], vec![], 1).unwrap();
        let frozen = plan_benefit(&ds, &["a", "b"], 10.0, BenefitConfig::default()).unwrap();
        assert_eq!(frozen.item_benefits, vec![50.0, 5.0]);
        let config = BenefitConfig {
            intact_set: IntactSet::Incremental,
            ..Default::default()
        };
        let inc = plan_benefit(&ds, &["a", "b"], 10.0, config).unwrap();
        assert_eq!(inc.item_benefits, vec![50.0, 5.0 + 50.0]);
    }

    #[test]
    fn fixpoint_mode_converges_on_small_city() {
        let ds = line_city();
        let units: Vec<Unit> = ds
            .units()
            .map(|u| {
                let mut u = u.clone();
                if u.id.as_str() == "E" {
                    u.status = Status::Damaged;
                }
                u
            })
            .collect();
        let roads = vec![RoadEdge::new("A", "B", 10.0), RoadEdge::new("B", "E", 10.0)];
        let ds = Dataset::new(units, roads, vec![], 1).unwrap();
        let config = BenefitConfig {
            neighbor: NeighborBenefit::Fixpoint,
            ..Default::default()
        };
        let model = BenefitModel::new(&ds, config).unwrap();
        let one = BenefitModel::new(&ds, BenefitConfig::default()).unwrap();
        let e = model.index().get("E").unwrap();
        assert!(model.frozen()[e].is_finite());
        assert!(model.frozen()[e] >= one.frozen()[e] * 0.5);
    }
}
