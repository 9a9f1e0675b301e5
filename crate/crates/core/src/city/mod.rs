//! City data model: reconstruction units, road segments, declared physical
//! dependencies, and the derivation rules applied at ingest.
//!
//! Roads are reconstruction items in their own right. A road between units
//! `A` and `B` is addressed by the item id `"A-B"`; lookups also accept the
//! reversed form `"B-A"`.

mod graph;
mod io;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{build_dependency_graph, DependencyGraph, ItemIndex};
pub use io::{load_dataset, parse_dataset, save_dataset, snapshot_file_name, to_canonical_string};

/// Political priority assigned to road items when the input does not say.
pub const ROAD_DEFAULT_PRIORITY: u8 = 8;
/// Highest political priority on the 1..=10 scale.
pub const MAX_PRIORITY: u8 = 10;

/// Opaque identifier of a reconstruction item (unit or road).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Item id of the road joining `from` and `to`.
    pub fn road(from: &ItemId, to: &ItemId) -> Self {
        ItemId(format!("{}-{}", from.0, to.0))
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

impl AsRef<str> for ItemId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for ItemId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Damage state of an item. Serialized as `0` (damaged) or `1` (intact).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Status {
    Damaged,
    Intact,
}

impl Status {
    pub fn is_damaged(self) -> bool {
        self == Status::Damaged
    }
}

impl From<Status> for u8 {
    fn from(s: Status) -> u8 {
        match s {
            Status::Damaged => 0,
            Status::Intact => 1,
        }
    }
}

impl TryFrom<u8> for Status {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Status::Damaged),
            1 => Ok(Status::Intact),
            other => Err(format!("status must be 0 or 1, got {other}")),
        }
    }
}

/// Building categories with their political priority, plus `Road` for
/// access infrastructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum UnitKind {
    Hospital,
    CollegeSchool,
    Residential,
    PublicPoint,
    Religious,
    PublicBuilding,
    BusinessCenter,
    GymCenter,
    BanquetHall,
    PrivateBuilding,
    Museum,
    BarCinema,
    OtherPlace,
    Road,
}

impl UnitKind {
    /// The thirteen building categories, highest priority first.
    pub const BUILDINGS: [UnitKind; 13] = [
        UnitKind::Hospital,
        UnitKind::CollegeSchool,
        UnitKind::Residential,
        UnitKind::PublicPoint,
        UnitKind::Religious,
        UnitKind::PublicBuilding,
        UnitKind::BusinessCenter,
        UnitKind::GymCenter,
        UnitKind::BanquetHall,
        UnitKind::PrivateBuilding,
        UnitKind::Museum,
        UnitKind::BarCinema,
        UnitKind::OtherPlace,
    ];

    pub fn label(self) -> &'static str {
        match self {
            UnitKind::Hospital => "Hospitals",
            UnitKind::CollegeSchool => "Colleges/School",
            UnitKind::Residential => "Residential Area",
            UnitKind::PublicPoint => "Public Points",
            UnitKind::Religious => "Religious",
            UnitKind::PublicBuilding => "Public Buildings",
            UnitKind::BusinessCenter => "Business Centers",
            UnitKind::GymCenter => "Gym Centers",
            UnitKind::BanquetHall => "Banquet Halls",
            UnitKind::PrivateBuilding => "Private Buildings",
            UnitKind::Museum => "Museums",
            UnitKind::BarCinema => "Bars/Cinemas",
            UnitKind::OtherPlace => "Other Places",
            UnitKind::Road => "Road",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<UnitKind> for String {
    fn from(k: UnitKind) -> String {
        k.label().to_owned()
    }
}

impl TryFrom<String> for UnitKind {
    type Error = UnknownKind;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown unit kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for UnitKind {
    type Err = UnknownKind;

    /// Accepts the category labels case-insensitively, ignoring punctuation
    /// and a trailing plural `s`, plus a few common aliases.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let kind = match key.as_str() {
            "hospital" | "hospitals" => UnitKind::Hospital,
            "collegesschool" | "collegeschool" | "college" | "colleges" | "school" | "schools"
            | "university" => UnitKind::CollegeSchool,
            "residentialarea" | "residential" | "residence" | "civilbuilding" => {
                UnitKind::Residential
            }
            "publicpoints" | "publicpoint" => UnitKind::PublicPoint,
            "religious" | "church" => UnitKind::Religious,
            "publicbuildings" | "publicbuilding" => UnitKind::PublicBuilding,
            "businesscenters" | "businesscenter" | "supermarket" => UnitKind::BusinessCenter,
            "gymcenters" | "gymcenter" | "gym" => UnitKind::GymCenter,
            "banquethalls" | "banquethall" => UnitKind::BanquetHall,
            "privatebuildings" | "privatebuilding" => UnitKind::PrivateBuilding,
            "museums" | "museum" => UnitKind::Museum,
            "barscinemas" | "barcinema" | "bar" | "bars" | "cinema" | "cinemas" => {
                UnitKind::BarCinema
            }
            "otherplaces" | "otherplace" | "other" => UnitKind::OtherPlace,
            "road" | "roads" | "bridge" | "pdependency" | "dependency" => UnitKind::Road,
            _ => return Err(UnknownKind(s.to_owned())),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("vulnerability index must be in 0..=5, got {0}")]
pub struct VulnerabilityOutOfRange(pub i64);

/// Status implied by a vulnerability index: 0..=3 is damaged, 4..=5 intact.
pub fn derive_status(vulnerability: i64) -> Result<Status, VulnerabilityOutOfRange> {
    match vulnerability {
        0..=3 => Ok(Status::Damaged),
        4..=5 => Ok(Status::Intact),
        v => Err(VulnerabilityOutOfRange(v)),
    }
}

/// Political priority of a category.
pub fn priority_for_kind(kind: UnitKind) -> u8 {
    match kind {
        UnitKind::Hospital => 10,
        UnitKind::CollegeSchool => 9,
        UnitKind::Residential => 9,
        UnitKind::PublicPoint => 8,
        UnitKind::Religious => 8,
        UnitKind::PublicBuilding => 7,
        UnitKind::BusinessCenter => 6,
        UnitKind::GymCenter => 5,
        UnitKind::BanquetHall => 5,
        UnitKind::PrivateBuilding => 4,
        UnitKind::Museum => 3,
        UnitKind::BarCinema => 2,
        UnitKind::OtherPlace => 1,
        UnitKind::Road => ROAD_DEFAULT_PRIORITY,
    }
}

/// Priority lookup by category label; unknown labels are rejected.
pub fn priority_for_label(label: &str) -> Result<u8, UnknownKind> {
    label.parse().map(priority_for_kind)
}

/// One building-like reconstruction unit (a node of the units graph).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: ItemId,
    pub kind: UnitKind,
    pub status: Status,
    pub vulnerability: u8,
    /// Reconstruction cost in budget units.
    pub cost: f64,
    /// Reconstruction duration in months.
    pub time: f64,
    pub priority: u8,
    /// People per day using the unit directly.
    pub direct_benefit: u64,
    /// Optional layout hints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl Unit {
    /// A unit with its status and priority derived from vulnerability and kind.
    pub fn new(id: impl Into<String>, kind: UnitKind, vulnerability: u8) -> Self {
        Unit {
            id: ItemId::new(id),
            kind,
            status: derive_status(vulnerability as i64).unwrap_or(Status::Intact),
            vulnerability,
            cost: 0.0,
            time: 0.0,
            priority: priority_for_kind(kind),
            direct_benefit: 0,
            x: None,
            y: None,
        }
    }

    pub fn with_cost_time(mut self, cost: f64, time: f64) -> Self {
        self.cost = cost;
        self.time = time;
        self
    }

    pub fn with_benefit(mut self, direct_benefit: u64) -> Self {
        self.direct_benefit = direct_benefit;
        self
    }

    pub fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self
    }

    pub fn with_priority(mut self, priority: u8) -> Self {
        self.priority = priority;
        self
    }
}

/// Undirected road segment between two units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub from: ItemId,
    pub to: ItemId,
    pub status: Status,
    pub length: f64,
    #[serde(default)]
    pub cost: f64,
    #[serde(default)]
    pub time: f64,
    #[serde(default = "default_road_priority")]
    pub priority: u8,
    #[serde(default)]
    pub direct_benefit: u64,
}

fn default_road_priority() -> u8 {
    ROAD_DEFAULT_PRIORITY
}

impl RoadEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, length: f64) -> Self {
        RoadEdge {
            from: ItemId::new(from),
            to: ItemId::new(to),
            status: Status::Intact,
            length,
            cost: 0.0,
            time: 0.0,
            priority: ROAD_DEFAULT_PRIORITY,
            direct_benefit: 0,
        }
    }

    pub fn damaged(mut self, cost: f64, time: f64) -> Self {
        self.status = Status::Damaged;
        self.cost = cost;
        self.time = time;
        self
    }

    pub fn id(&self) -> ItemId {
        ItemId::road(&self.from, &self.to)
    }
}

/// `blocked` cannot be reconstructed before `blocker`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub blocked: ItemId,
    pub blocker: ItemId,
}

impl DependencyEdge {
    pub fn new(blocked: impl Into<String>, blocker: impl Into<String>) -> Self {
        DependencyEdge {
            blocked: ItemId::new(blocked),
            blocker: ItemId::new(blocker),
        }
    }
}

/// Where in the input a validation problem was found.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub table: String,
    /// 1-based row (file line when loaded from a file).
    pub row: Option<usize>,
    pub field: Option<String>,
}

impl Location {
    pub fn new(table: &str, row: Option<usize>, field: Option<&str>) -> Self {
        Location {
            table: table.to_owned(),
            row,
            field: field.map(str::to_owned),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table)?;
        if let Some(row) = self.row {
            write!(f, " row {row}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " field `{field}`")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{at}: {message}")]
    Schema { at: Location, message: String },
    #[error("{at}: unknown item `{id}`")]
    DanglingReference { at: Location, id: String },
    #[error("{at}: dependency cycle {}", path.join(" -> "))]
    DependencyCycle { at: Location, path: Vec<String> },
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    fn schema(at: Location, message: impl Into<String>) -> Self {
        DatasetError::Schema {
            at,
            message: message.into(),
        }
    }
}

/// File line numbers per table row, used to point errors at the input file.
#[derive(Debug, Clone, Default)]
pub(crate) struct RowLines {
    pub units: Vec<usize>,
    pub roads: Vec<usize>,
    pub dependencies: Vec<usize>,
}

impl RowLines {
    fn line(lines: &[usize], index: usize) -> usize {
        lines.get(index).copied().unwrap_or(index + 1)
    }
}

/// Read-only view of any reconstruction item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemView {
    pub id: ItemId,
    pub kind: UnitKind,
    pub status: Status,
    pub cost: f64,
    pub time: f64,
    pub priority: u8,
    pub direct_benefit: u64,
    /// Endpoints and length when the item is a road segment.
    pub road: Option<(ItemId, ItemId, f64)>,
}

impl ItemView {
    pub fn is_road(&self) -> bool {
        self.road.is_some() || self.kind == UnitKind::Road
    }

    /// Cost counted by planning; zero once intact.
    pub fn effective_cost(&self) -> f64 {
        if self.status.is_damaged() {
            self.cost
        } else {
            0.0
        }
    }

    /// Duration counted by planning; zero once intact.
    pub fn effective_time(&self) -> f64 {
        if self.status.is_damaged() {
            self.time
        } else {
            0.0
        }
    }
}

/// A validated city snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    units: BTreeMap<ItemId, Unit>,
    roads: Vec<RoadEdge>,
    dependencies: Vec<DependencyEdge>,
    cycle: u32,
}

impl Dataset {
    /// Validates and assembles a snapshot. Road ids used in dependencies may
    /// be written in either orientation and are normalized.
    pub fn new(
        units: Vec<Unit>,
        roads: Vec<RoadEdge>,
        dependencies: Vec<DependencyEdge>,
        cycle: u32,
    ) -> Result<Self, DatasetError> {
        Self::assemble(units, roads, dependencies, cycle, &RowLines::default())
    }

    pub(crate) fn assemble(
        units: Vec<Unit>,
        roads: Vec<RoadEdge>,
        mut dependencies: Vec<DependencyEdge>,
        cycle: u32,
        lines: &RowLines,
    ) -> Result<Self, DatasetError> {
        if cycle == 0 {
            return Err(DatasetError::schema(
                Location::new("meta", None, Some("cycle")),
                "cycle must be at least 1",
            ));
        }
        let mut map = BTreeMap::new();
        for (i, unit) in units.into_iter().enumerate() {
            let row = Some(RowLines::line(&lines.units, i));
            check_unit(&unit, row)?;
            if map.contains_key(&unit.id) {
                return Err(DatasetError::schema(
                    Location::new("units", row, Some("id")),
                    format!("duplicate id `{}`", unit.id),
                ));
            }
            map.insert(unit.id.clone(), unit);
        }

        let mut road_ids: HashMap<String, usize> = HashMap::new();
        for (i, road) in roads.iter().enumerate() {
            let row = Some(RowLines::line(&lines.roads, i));
            for (field, end) in [("from", &road.from), ("to", &road.to)] {
                if !map.contains_key(end) {
                    return Err(DatasetError::DanglingReference {
                        at: Location::new("roads", row, Some(field)),
                        id: end.to_string(),
                    });
                }
            }
            if road.from == road.to {
                return Err(DatasetError::schema(
                    Location::new("roads", row, Some("to")),
                    "road endpoints must be distinct",
                ));
            }
            if !(road.length.is_finite() && road.length > 0.0) {
                return Err(DatasetError::schema(
                    Location::new("roads", row, Some("length")),
                    format!("length must be positive, got {}", road.length),
                ));
            }
            check_money_time(road.cost, road.time, "roads", row)?;
            check_priority(road.priority, "roads", row)?;
            let id = road.id().to_string();
            let reversed = ItemId::road(&road.to, &road.from).to_string();
            if map.contains_key(id.as_str())
                || map.contains_key(reversed.as_str())
                || road_ids.contains_key(&id)
                || road_ids.contains_key(&reversed)
            {
                return Err(DatasetError::schema(
                    Location::new("roads", row, None),
                    format!("road id `{id}` collides with another item"),
                ));
            }
            road_ids.insert(id, i);
            road_ids.insert(reversed, i);
        }

        for (i, dep) in dependencies.iter_mut().enumerate() {
            let row = Some(RowLines::line(&lines.dependencies, i));
            for (field, id) in [("blocked", &mut dep.blocked), ("blocker", &mut dep.blocker)] {
                if map.contains_key(id.as_str()) {
                    continue;
                }
                match road_ids.get(id.as_str()) {
                    Some(&r) => *id = roads[r].id(),
                    None => {
                        return Err(DatasetError::DanglingReference {
                            at: Location::new("dependencies", row, Some(field)),
                            id: id.to_string(),
                        })
                    }
                }
            }
            if dep.blocked == dep.blocker {
                return Err(DatasetError::schema(
                    Location::new("dependencies", row, Some("blocker")),
                    "an item cannot depend on itself",
                ));
            }
        }
        if let Some((index, path)) = graph::find_declared_cycle(&dependencies) {
            return Err(DatasetError::DependencyCycle {
                at: Location::new(
                    "dependencies",
                    Some(RowLines::line(&lines.dependencies, index)),
                    None,
                ),
                path,
            });
        }
        Ok(Dataset {
            units: map,
            roads,
            dependencies,
            cycle,
        })
    }

    pub fn units(&self) -> impl Iterator<Item = &Unit> {
        self.units.values()
    }

    pub fn unit(&self, id: &str) -> Option<&Unit> {
        self.units.get(id)
    }

    pub fn roads(&self) -> &[RoadEdge] {
        &self.roads
    }

    pub fn dependencies(&self) -> &[DependencyEdge] {
        &self.dependencies
    }

    pub fn cycle(&self) -> u32 {
        self.cycle
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    /// Road with the given item id, in either orientation.
    pub fn road(&self, id: &str) -> Option<&RoadEdge> {
        self.roads.iter().find(|r| {
            let (a, b) = (r.from.as_str(), r.to.as_str());
            id.len() == a.len() + b.len() + 1
                && ((id.starts_with(a) && id.ends_with(b) && id.as_bytes()[a.len()] == b'-')
                    || (id.starts_with(b) && id.ends_with(a) && id.as_bytes()[b.len()] == b'-'))
        })
    }

    /// Every reconstruction item (units then roads), unordered.
    pub fn items(&self) -> Vec<ItemView> {
        let mut out: Vec<ItemView> = self
            .units
            .values()
            .map(|u| ItemView {
                id: u.id.clone(),
                kind: u.kind,
                status: u.status,
                cost: u.cost,
                time: u.time,
                priority: u.priority,
                direct_benefit: u.direct_benefit,
                road: None,
            })
            .collect();
        out.extend(self.roads.iter().map(|r| ItemView {
            id: r.id(),
            kind: UnitKind::Road,
            status: r.status,
            cost: r.cost,
            time: r.time,
            priority: r.priority,
            direct_benefit: r.direct_benefit,
            road: Some((r.from.clone(), r.to.clone(), r.length)),
        }));
        out
    }

    pub fn item(&self, id: &str) -> Option<ItemView> {
        if self.units.contains_key(id) {
            return self.items().into_iter().find(|i| i.id.as_str() == id);
        }
        let road = self.road(id)?.id();
        self.items().into_iter().find(|i| i.id == road)
    }

    /// Canonical id for an item id written in either road orientation.
    pub fn canonical_id(&self, id: &str) -> Option<ItemId> {
        if let Some(u) = self.units.get(id) {
            return Some(u.id.clone());
        }
        self.road(id).map(RoadEdge::id)
    }

    pub fn damaged_count(&self) -> usize {
        self.units.values().filter(|u| u.status.is_damaged()).count()
            + self.roads.iter().filter(|r| r.status.is_damaged()).count()
    }

    pub fn has_damage(&self) -> bool {
        self.damaged_count() > 0
    }

    /// Marks every item of `plan` intact and advances the cycle counter.
    pub fn apply_plan<S: AsRef<str>>(&self, plan: &[S]) -> Result<Dataset, DatasetError> {
        let mut next = self.clone();
        for id in plan {
            let id = id.as_ref();
            if let Some(unit) = next.units.get_mut(id) {
                unit.status = Status::Intact;
                continue;
            }
            let canonical = self
                .road(id)
                .map(RoadEdge::id)
                .ok_or_else(|| DatasetError::UnknownItem(id.to_owned()))?;
            let road = next
                .roads
                .iter_mut()
                .find(|r| r.id() == canonical)
                .expect("road resolved above");
            road.status = Status::Intact;
        }
        next.cycle += 1;
        Ok(next)
    }

    /// The same snapshot with a different cycle number.
    pub fn with_cycle(mut self, cycle: u32) -> Self {
        self.cycle = cycle.max(1);
        self
    }
}

/// Free-function form of [`Dataset::apply_plan`].
pub fn apply_plan<S: AsRef<str>>(dataset: &Dataset, plan: &[S]) -> Result<Dataset, DatasetError> {
    dataset.apply_plan(plan)
}

fn check_unit(unit: &Unit, row: Option<usize>) -> Result<(), DatasetError> {
    if unit.id.as_str().trim().is_empty() {
        return Err(DatasetError::schema(
            Location::new("units", row, Some("id")),
            "id must not be empty",
        ));
    }
    if unit.vulnerability > 5 {
        return Err(DatasetError::schema(
            Location::new("units", row, Some("vulnerability")),
            VulnerabilityOutOfRange(unit.vulnerability as i64).to_string(),
        ));
    }
    check_money_time(unit.cost, unit.time, "units", row)?;
    check_priority(unit.priority, "units", row)?;
    for (field, v) in [("x", unit.x), ("y", unit.y)] {
        if v.is_some_and(|v| !v.is_finite()) {
            return Err(DatasetError::schema(
                Location::new("units", row, Some(field)),
                "coordinate must be finite",
            ));
        }
    }
    Ok(())
}

fn check_money_time(cost: f64, time: f64, table: &str, row: Option<usize>) -> Result<(), DatasetError> {
    for (field, v) in [("cost", cost), ("time", time)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(DatasetError::schema(
                Location::new(table, row, Some(field)),
                format!("{field} must be a nonnegative number, got {v}"),
            ));
        }
    }
    Ok(())
}

fn check_priority(priority: u8, table: &str, row: Option<usize>) -> Result<(), DatasetError> {
    if !(1..=MAX_PRIORITY).contains(&priority) {
        return Err(DatasetError::schema(
            Location::new(table, row, Some("priority")),
            format!("priority must be in 1..=10, got {priority}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_from_vulnerability() {
        assert_eq!(derive_status(2).unwrap(), Status::Damaged);
        assert_eq!(derive_status(3).unwrap(), Status::Damaged);
        assert_eq!(derive_status(4).unwrap(), Status::Intact);
        assert_eq!(derive_status(5).unwrap(), Status::Intact);
        assert!(derive_status(6).is_err());
        assert!(derive_status(-1).is_err());
    }

    #[test]
    fn status_is_monotone() {
        let as_int = |v| u8::from(derive_status(v).unwrap());
        for v in 0..5 {
            assert!(as_int(v) <= as_int(v + 1));
        }
    }

    #[test]
    fn kind_labels_round_trip() {
        for kind in UnitKind::BUILDINGS.iter().chain([UnitKind::Road].iter()) {
            assert_eq!(kind.label().parse::<UnitKind>().unwrap(), *kind);
        }
        assert_eq!("hospital".parse::<UnitKind>().unwrap(), UnitKind::Hospital);
        assert_eq!("BARS / cinemas".parse::<UnitKind>().unwrap(), UnitKind::BarCinema);
        assert!(priority_for_label("spaceport").is_err());
        assert_eq!(priority_for_label("Museums").unwrap(), 3);
        assert_eq!(priority_for_kind(UnitKind::Road), 8);
    }

    fn two_units() -> Vec<Unit> {
        vec![
            Unit::new("a", UnitKind::Hospital, 5),
            Unit::new("b", UnitKind::Museum, 5),
        ]
    }

    #[test]
    fn minimal_dataset() {
        let ds = Dataset::new(two_units(), vec![RoadEdge::new("a", "b", 1.0)], vec![], 1).unwrap();
        assert_eq!(ds.unit_count(), 2);
        assert_eq!(ds.cycle(), 1);
        assert!(!ds.has_damage());
    }

    #[test]
    fn dangling_road_reference() {
        let err = Dataset::new(two_units(), vec![RoadEdge::new("a", "99", 1.0)], vec![], 1).unwrap_err();
        match err {
            DatasetError::DanglingReference { at, id } => {
                assert_eq!(id, "99");
                assert_eq!(at.table, "roads");
                assert_eq!(at.row, Some(1));
                assert_eq!(at.field.as_deref(), Some("to"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn declared_cycle_rejected() {
        let deps = vec![DependencyEdge::new("a", "b"), DependencyEdge::new("b", "a")];
        let err = Dataset::new(two_units(), vec![], deps, 1).unwrap_err();
        assert!(matches!(err, DatasetError::DependencyCycle { .. }), "{err}");
    }

    #[test]
    fn self_dependency_and_bad_fields_rejected() {
        assert!(Dataset::new(two_units(), vec![], vec![DependencyEdge::new("a", "a")], 1).is_err());
        let bad = vec![Unit::new("a", UnitKind::Hospital, 5).with_priority(11)];
        assert!(Dataset::new(bad, vec![], vec![], 1).is_err());
        let bad = vec![Unit::new("a", UnitKind::Hospital, 5).with_cost_time(-1.0, 1.0)];
        assert!(Dataset::new(bad, vec![], vec![], 1).is_err());
        let err = Dataset::new(two_units(), vec![RoadEdge::new("a", "b", 0.0)], vec![], 1).unwrap_err();
        assert!(err.to_string().contains("length"));
    }

    #[test]
    fn road_ids_accept_both_orientations() {
        let roads = vec![RoadEdge::new("87", "9", 2.0).damaged(5.0, 1.0)];
        let units = vec![
            Unit::new("87", UnitKind::Residential, 2),
            Unit::new("9", UnitKind::Residential, 5),
        ];
        let deps = vec![DependencyEdge::new("87", "9-87")];
        let ds = Dataset::new(units, roads, deps, 1).unwrap();
        assert_eq!(ds.dependencies()[0].blocker.as_str(), "87-9");
        assert_eq!(ds.canonical_id("9-87").unwrap().as_str(), "87-9");
        assert!(ds.road("8-79").is_none());
    }

    #[test]
    fn apply_plan_marks_items_intact() {
        let units = vec![
            Unit::new("87", UnitKind::Residential, 2),
            Unit::new("9", UnitKind::Residential, 1),
        ];
        let roads = vec![RoadEdge::new("87", "9", 2.0).damaged(5.0, 1.0)];
        let ds = Dataset::new(units, roads, vec![], 1).unwrap();

        let same = ds.apply_plan::<&str>(&[]).unwrap();
        assert_eq!(same.cycle(), 2);
        assert_eq!(same.clone().with_cycle(1), ds);

        let next = ds.apply_plan(&["87", "87-9"]).unwrap();
        assert_eq!(next.unit("87").unwrap().status, Status::Intact);
        assert_eq!(next.unit("9").unwrap().status, Status::Damaged);
        assert_eq!(next.roads()[0].status, Status::Intact);
        assert_eq!(next.unit("87").unwrap().cost, ds.unit("87").unwrap().cost);

        assert!(matches!(ds.apply_plan(&["nope"]), Err(DatasetError::UnknownItem(_))));
    }
}
