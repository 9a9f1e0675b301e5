use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{Dataset, DependencyEdge, ItemId, ItemView};

/// Stable numbering of every item in a dataset, ordered by item id.
///
/// Road ids resolve in both orientations.
#[derive(Debug, Clone)]
pub struct ItemIndex {
    items: Vec<ItemView>,
    lookup: HashMap<String, usize>,
}

impl ItemIndex {
    pub fn new(dataset: &Dataset) -> Self {
        let mut items = dataset.items();
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let mut lookup = HashMap::with_capacity(items.len() * 2);
        for (i, item) in items.iter().enumerate() {
            lookup.insert(item.id.to_string(), i);
        }
        for (i, item) in items.iter().enumerate() {
            if let Some((from, to, _)) = &item.road {
                lookup
                    .entry(ItemId::road(to, from).to_string())
                    .or_insert(i);
            }
        }
        ItemIndex { items, lookup }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn item(&self, index: usize) -> &ItemView {
        &self.items[index]
    }

    pub fn items(&self) -> &[ItemView] {
        &self.items
    }

    pub fn id(&self, index: usize) -> &ItemId {
        &self.items[index].id
    }

    /// Adjacency of the units graph with every road subdivided into its own
    /// node, so that roads and units can both sit on a path.
    pub(crate) fn subdivided_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.items.len()];
        for (r, item) in self.items.iter().enumerate() {
            if let Some((from, to, _)) = &item.road {
                for end in [from, to] {
                    let e = self.lookup[end.as_str()];
                    adj[r].push(e);
                    adj[e].push(r);
                }
            }
        }
        adj
    }
}

/// Directed physical-dependency graph: an edge `blocked -> blocker` means
/// `blocked` cannot be reconstructed before `blocker`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    blockers: BTreeMap<ItemId, BTreeSet<ItemId>>,
}

impl DependencyGraph {
    pub fn from_edges(edges: impl IntoIterator<Item = DependencyEdge>) -> Self {
        let mut g = DependencyGraph::default();
        for e in edges {
            g.blockers.entry(e.blocked).or_default().insert(e.blocker);
        }
        g
    }

    pub fn edges(&self) -> Vec<DependencyEdge> {
        self.blockers
            .iter()
            .flat_map(|(blocked, set)| {
                set.iter().map(move |blocker| DependencyEdge {
                    blocked: blocked.clone(),
                    blocker: blocker.clone(),
                })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.blockers.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, blocked: &str, blocker: &str) -> bool {
        self.blockers
            .get(blocked)
            .is_some_and(|s| s.contains(blocker))
    }

    /// Direct blockers of `id`.
    pub fn blockers_of(&self, id: &str) -> impl Iterator<Item = &ItemId> {
        self.blockers.get(id).into_iter().flatten()
    }

    /// Every item `id` depends on, directly or transitively.
    pub fn transitive_blockers(&self, id: &str) -> BTreeSet<ItemId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&ItemId> = self.blockers_of(id).collect();
        while let Some(next) = stack.pop() {
            if out.insert(next.clone()) {
                stack.extend(self.blockers_of(next.as_str()));
            }
        }
        out
    }

    /// Whether any item is involved in a dependency, as blocked or blocker.
    pub fn involves(&self, id: &str) -> bool {
        self.blockers.contains_key(id) || self.blockers.values().any(|s| s.contains(id))
    }

    pub fn is_acyclic(&self) -> bool {
        self.blockers
            .keys()
            .all(|k| !self.transitive_blockers(k.as_str()).contains(k))
    }

    fn insert_if_acyclic(&mut self, blocked: &ItemId, blocker: &ItemId) -> bool {
        if blocked == blocker
            || self.transitive_blockers(blocker.as_str()).contains(blocked)
        {
            return false;
        }
        self.blockers
            .entry(blocked.clone())
            .or_default()
            .insert(blocker.clone());
        true
    }
}

/// Builds the dependency graph over damaged items.
///
/// Declared dependencies whose endpoints are both still damaged are kept.
/// On top of those, a damaged item `x` depends on every damaged item `r`
/// through which all paths from the accessible core of its component pass.
/// The accessible core is the largest cluster of intact units joined by
/// intact roads (ties go to the cluster holding the smallest id). A derived
/// edge that would close a cycle with the declared ones is dropped.
pub fn build_dependency_graph(dataset: &Dataset) -> DependencyGraph {
    let index = ItemIndex::new(dataset);
    let n = index.len();
    let damaged: Vec<bool> = index.items().iter().map(|i| i.status.is_damaged()).collect();

    let mut graph = DependencyGraph::default();
    for dep in dataset.dependencies() {
        let (Some(a), Some(b)) = (index.get(dep.blocked.as_str()), index.get(dep.blocker.as_str()))
        else {
            continue;
        };
        if damaged[a] && damaged[b] {
            graph.insert_if_acyclic(index.id(a), index.id(b));
        }
    }

    let adj = index.subdivided_adjacency();
    let is_unit: Vec<bool> = index.items().iter().map(|i| i.road.is_none()).collect();
    let component = label_components(&adj, |_| true);
    let cluster = label_components(&adj, |v| !damaged[v]);

    // best intact cluster per component: (unit count, smallest member)
    let mut best: HashMap<usize, (usize, usize, usize)> = HashMap::new();
    let mut cluster_units: HashMap<usize, (usize, usize)> = HashMap::new();
    for v in 0..n {
        if let Some(c) = cluster[v] {
            let entry = cluster_units.entry(c).or_insert((0, v));
            if is_unit[v] {
                entry.0 += 1;
            }
            entry.1 = entry.1.min(v);
        }
    }
    for v in 0..n {
        let (Some(c), Some(comp)) = (cluster[v], component[v]) else {
            continue;
        };
        let (units, first) = cluster_units[&c];
        if units == 0 {
            continue;
        }
        let candidate = (units, first, c);
        best.entry(comp)
            .and_modify(|b| {
                if units > b.0 || (units == b.0 && first < b.1) {
                    *b = candidate;
                }
            })
            .or_insert(candidate);
    }

    let mut derived = Vec::new();
    for (&comp, &(_, _, core_cluster)) in &best {
        let core: Vec<usize> = (0..n).filter(|&v| cluster[v] == Some(core_cluster)).collect();
        let members: Vec<usize> = (0..n)
            .filter(|&v| component[v] == Some(comp) && damaged[v])
            .collect();
        for &r in &members {
            let reach = bfs(&adj, &core, Some(r));
            for &x in &members {
                if x != r && !reach[x] {
                    derived.push((x, r));
                }
            }
        }
    }
    derived.sort_unstable();
    for (x, r) in derived {
        graph.insert_if_acyclic(index.id(x), index.id(r));
    }
    graph
}

fn label_components(adj: &[Vec<usize>], include: impl Fn(usize) -> bool) -> Vec<Option<usize>> {
    let mut label = vec![None; adj.len()];
    let mut next = 0;
    for start in 0..adj.len() {
        if label[start].is_some() || !include(start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        label[start] = Some(next);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if label[w].is_none() && include(w) {
                    label[w] = Some(next);
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    label
}

fn bfs(adj: &[Vec<usize>], sources: &[usize], avoid: Option<usize>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if Some(s) != avoid && !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] && Some(w) != avoid {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// First cycle among declared dependencies, as (index of the closing edge,
/// ids along the cycle).
pub(crate) fn find_declared_cycle(deps: &[DependencyEdge]) -> Option<(usize, Vec<String>)> {
    let mut out: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    for (i, d) in deps.iter().enumerate() {
        out.entry(d.blocked.as_str())
            .or_default()
            .push((i, d.blocker.as_str()));
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    let starts: Vec<&str> = out.keys().copied().collect();
    for start in starts {
        if marks.contains_key(start) {
            continue;
        }
        // iterative DFS keeping the current path
        let mut path: Vec<(&str, usize)> = vec![(start, 0)];
        marks.insert(start, Mark::Active);
        while let Some(&mut (node, ref mut cursor)) = path.last_mut() {
            let next = out.get(node).and_then(|v| v.get(*cursor)).copied();
            *cursor += 1;
            match next {
                Some((edge, to)) => match marks.get(to) {
                    Some(Mark::Active) => {
                        let from = path.iter().position(|(n, _)| *n == to).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            path[from..].iter().map(|(n, _)| n.to_string()).collect();
                        cycle.push(to.to_string());
                        return Some((edge, cycle));
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(to, Mark::Active);
                        path.push((to, 0));
                    }
                },
                None => {
                    marks.insert(node, Mark::Done);
                    path.pop();
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::{RoadEdge, Status, Unit, UnitKind};

    /// Depth-first reachability oracle: is there a cycle among the edges?
    fn has_cycle_oracle(edges: &[(usize, usize)], n: usize) -> bool {
        fn visit(v: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
            state[v] = 1;
            for &w in &adj[v] {
                if state[w] == 1 || (state[w] == 0 && visit(w, adj, state)) {
                    return true;
                }
            }
            state[v] = 2;
            false
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
        }
        let mut state = vec![0u8; n];
        (0..n).any(|v| state[v] == 0 && visit(v, &adj, &mut state))
    }

    #[test]
    fn declared_cycle_detection_matches_oracle() {
        let cases: Vec<Vec<(usize, usize)>> = vec![
            vec![(0, 1), (1, 0)],
            vec![(0, 1), (1, 2)],
            vec![(0, 1), (1, 2), (2, 0)],
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
            vec![(3, 2), (2, 1), (1, 3), (0, 1)],
        ];
        for edges in cases {
            let deps: Vec<DependencyEdge> = edges
                .iter()
                .map(|&(a, b)| DependencyEdge::new(a.to_string(), b.to_string()))
                .collect();
            assert_eq!(
                find_declared_cycle(&deps).is_some(),
                has_cycle_oracle(&edges, 4),
                "{edges:?}"
            );
        }
        let deps = vec![DependencyEdge::new("A", "B"), DependencyEdge::new("B", "A")];
        let (_, path) = find_declared_cycle(&deps).unwrap();
        assert_eq!(path.first(), path.last());
    }

    /// Bridge scenario: the city core reaches the hospital, the university
    /// and a supermarket only across a damaged bridge.
    pub(crate) fn bridge_city() -> Dataset {
        let units = vec![
            Unit::new("center", UnitKind::PublicBuilding, 5).with_benefit(300),
            Unit::new("square", UnitKind::PublicPoint, 5).with_benefit(200),
            Unit::new("bridge", UnitKind::Road, 1).with_cost_time(40.0, 6.0),
            Unit::new("hospital", UnitKind::Hospital, 0)
                .with_cost_time(50.0, 12.0)
                .with_benefit(2000),
            Unit::new("university", UnitKind::CollegeSchool, 2)
                .with_cost_time(30.0, 10.0)
                .with_benefit(1000),
            Unit::new("conad", UnitKind::BusinessCenter, 5).with_benefit(150),
        ];
        let roads = vec![
            RoadEdge::new("center", "square", 1.0),
            RoadEdge::new("square", "bridge", 1.0),
            RoadEdge::new("bridge", "hospital", 1.0),
            RoadEdge::new("bridge", "university", 1.5),
            RoadEdge::new("bridge", "conad", 2.0),
        ];
        Dataset::new(units, roads, vec![], 1).unwrap()
    }

    #[test]
    fn bridge_gates_hospital_and_university() {
        let g = build_dependency_graph(&bridge_city());
        let edges = g.edges();
        assert_eq!(
            edges,
            vec![
                DependencyEdge::new("hospital", "bridge"),
                DependencyEdge::new("university", "bridge"),
            ]
        );
    }

    #[test]
    fn intact_roads_yield_only_declared() {
        let units = vec![
            Unit::new("a", UnitKind::Hospital, 5),
            Unit::new("b", UnitKind::Residential, 1),
            Unit::new("c", UnitKind::Museum, 1),
        ];
        let roads = vec![RoadEdge::new("a", "b", 1.0), RoadEdge::new("a", "c", 1.0)];
        let deps = vec![DependencyEdge::new("c", "b")];
        let ds = Dataset::new(units, roads, deps.clone(), 1).unwrap();
        assert_eq!(build_dependency_graph(&ds).edges(), deps);
    }

    /// Brute-force oracle for cut dependencies: enumerate every simple path
    /// from the core to `x` in the subdivided graph and intersect them.
    fn blockers_by_path_enumeration(adj: &[Vec<usize>], core: &[usize], x: usize) -> BTreeSet<usize> {
        fn walk(
            v: usize,
            target: usize,
            adj: &[Vec<usize>],
            on_path: &mut Vec<bool>,
            path: &mut Vec<usize>,
            acc: &mut Option<BTreeSet<usize>>,
        ) {
            if v == target {
                let here: BTreeSet<usize> = path.iter().copied().collect();
                *acc = Some(match acc.take() {
                    None => here,
                    Some(prev) => prev.intersection(&here).copied().collect(),
                });
                return;
            }
            for &w in &adj[v] {
                if !on_path[w] {
                    on_path[w] = true;
                    path.push(w);
                    walk(w, target, adj, on_path, path, acc);
                    path.pop();
                    on_path[w] = false;
                }
            }
        }
        let mut acc = None;
        for &s in core {
            let mut on_path = vec![false; adj.len()];
            on_path[s] = true;
            let mut path = vec![];
            walk(s, x, adj, &mut on_path, &mut path, &mut acc);
        }
        let mut set = acc.unwrap_or_default();
        set.remove(&x);
        set
    }

    #[test]
    fn path_with_damaged_segment() {
        let units = vec![
            Unit::new("A", UnitKind::Residential, 5),
            Unit::new("B", UnitKind::Residential, 5),
            Unit::new("C", UnitKind::Residential, 5),
            Unit::new("D", UnitKind::Residential, 1),
        ];
        let roads = vec![
            RoadEdge::new("A", "B", 1.0),
            RoadEdge::new("B", "C", 1.0).damaged(10.0, 1.0),
            RoadEdge::new("C", "D", 1.0),
        ];
        let ds = Dataset::new(units, roads, vec![], 1).unwrap();
        let g = build_dependency_graph(&ds);
        assert_eq!(g.edges(), vec![DependencyEdge::new("D", "B-C")]);

        // cross-check with the path-enumeration oracle; the core is {A, A-B, B}
        let index = ItemIndex::new(&ds);
        let adj = index.subdivided_adjacency();
        let core: Vec<usize> = ["A", "A-B", "B"].iter().map(|i| index.get(i).unwrap()).collect();
        let d = index.get("D").unwrap();
        let oracle = blockers_by_path_enumeration(&adj, &core, d);
        let damaged: BTreeSet<usize> = oracle
            .into_iter()
            .filter(|&i| index.item(i).status == Status::Damaged)
            .collect();
        assert_eq!(damaged, BTreeSet::from([index.get("B-C").unwrap()]));
    }

    #[test]
    fn applied_blockers_disappear() {
        let ds = bridge_city();
        let next = ds.apply_plan(&["bridge"]).unwrap();
        let g = build_dependency_graph(&next);
        assert!(g.is_empty());
    }

    #[test]
    fn transitive_blockers_follow_chains() {
        let g = DependencyGraph::from_edges([
            DependencyEdge::new("c", "b"),
            DependencyEdge::new("b", "a"),
        ]);
        assert_eq!(
            g.transitive_blockers("c"),
            BTreeSet::from([ItemId::from("a"), ItemId::from("b")])
        );
        assert!(g.involves("a") && !g.involves("z"));
        assert!(g.is_acyclic());
    }
}
