//! Directed queueing network: nodes, links, per-link queues, phases and
//! routing proportions.
//!
//! Every directed link `(i, j)` carries one queue, owned by the downstream
//! node `j`. A *phase* is a set of non-conflicting incoming links a node may
//! serve simultaneously; the per-node phase lists induce the feasible set of
//! binary activation vectors. Routing is described per in-link: a job that
//! reached node `s` via `(h, s)` continues toward out-neighbor `i` with
//! proportion `eta(h, s, i)`, and exits the network with the residual mass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Index into [`NetworkGraph::node_ids`].
pub type NodeIdx = usize;
/// Index into [`NetworkGraph::links`]; also identifies the link's queue.
pub type LinkIdx = usize;

/// A directed link `(from, to)` with a fixed free-flow travel time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub from: NodeIdx,
    pub to: NodeIdx,
    /// Slots a job spends in flight before joining the queue at `to`.
    pub travel: u32,
}

/// One phase at a node: the set of incoming links that receive service
/// together while the phase is green.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub name: String,
    /// Member incoming links, sorted by link index.
    pub links: Vec<LinkIdx>,
}

/// Routing row for one in-link `(h, s)`: turn proportions toward each
/// out-link of `s`, plus the residual exit probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingRow {
    /// `(out_link, fraction)` pairs, sorted by out-link index.
    pub turns: Vec<(LinkIdx, f64)>,
    /// Probability that a job served from this queue leaves the network.
    pub exit: f64,
}

impl RoutingRow {
    fn exit_only() -> Self {
        RoutingRow { turns: Vec::new(), exit: 1.0 }
    }
}

/// Per-in-link routing proportions for the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    /// Indexed by in-link (`LinkIdx`).
    pub rows: Vec<RoutingRow>,
}

impl RoutingTable {
    /// The proportion of jobs arriving at `s` over `in_link` that continue
    /// over `out_link`. Zero if no such turn is declared.
    pub fn fraction(&self, in_link: LinkIdx, out_link: LinkIdx) -> f64 {
        self.rows[in_link]
            .turns
            .iter()
            .find(|(l, _)| *l == out_link)
            .map(|(_, f)| *f)
            .unwrap_or(0.0)
    }
}

/// Service-time parameters: a per-node work rate (work units per slot) and a
/// per-class job work demand (slots of work per job).
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceProfile {
    /// Work units an active link can process per slot, indexed by node.
    pub node_rate: Vec<f64>,
    /// Work units one job of each class demands. Class 0 is the default.
    pub class_work: Vec<u32>,
}

impl ServiceProfile {
    pub fn uniform(node_count: usize) -> Self {
        ServiceProfile { node_rate: vec![1.0; node_count], class_work: vec![1] }
    }

    /// Effective service rate in jobs/slot for class `k` at node `l`.
    pub fn jobs_per_slot(&self, node: NodeIdx, class: usize) -> f64 {
        self.node_rate[node] / self.class_work[class] as f64
    }
}

/// Validated directed queueing network. Immutable after construction; shared
/// read-only across parallel replication runs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_ids: Vec<String>,
    links: Vec<Link>,
    in_links: Vec<Vec<LinkIdx>>,
    out_links: Vec<Vec<LinkIdx>>,
    phases: Vec<Vec<Phase>>,
    routing: RoutingTable,
}

impl NetworkGraph {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_id(&self, node: NodeIdx) -> &str {
        &self.node_ids[node]
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIdx> {
        self.node_ids.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }

    pub fn link(&self, link: LinkIdx) -> &Link {
        &self.links[link]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_index(&self, from: NodeIdx, to: NodeIdx) -> Option<LinkIdx> {
        self.links.iter().position(|l| l.from == from && l.to == to)
    }

    /// Incoming links of `node`, sorted by link index.
    pub fn in_links(&self, node: NodeIdx) -> &[LinkIdx] {
        &self.in_links[node]
    }

    /// Outgoing links of `node`, sorted by link index.
    pub fn out_links(&self, node: NodeIdx) -> &[LinkIdx] {
        &self.out_links[node]
    }

    /// Upstream neighbor nodes of `node`.
    pub fn in_neighbors(&self, node: NodeIdx) -> impl Iterator<Item = NodeIdx> + '_ {
        self.in_links[node].iter().map(|&l| self.links[l].from)
    }

    /// Downstream neighbor nodes of `node`.
    pub fn out_neighbors(&self, node: NodeIdx) -> impl Iterator<Item = NodeIdx> + '_ {
        self.out_links[node].iter().map(|&l| self.links[l].to)
    }

    /// Ordered phase list of `node`; empty for source-only nodes.
    pub fn phases(&self, node: NodeIdx) -> &[Phase] {
        &self.phases[node]
    }

    pub fn routing(&self) -> &RoutingTable {
        &self.routing
    }

    /// Human-readable `from>to` label of a link.
    pub fn link_label(&self, link: LinkIdx) -> String {
        let l = &self.links[link];
        format!("{}>{}", self.node_ids[l.from], self.node_ids[l.to])
    }
}

/// Unvalidated topology section of a scenario, as parsed from text or built
/// by a generator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub phases: Vec<PhaseSpec>,
    pub turns: Vec<TurnSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    /// Work units per slot; 1.0 means one unit-work job per slot.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub travel: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub node: String,
    pub name: String,
    /// Upstream endpoints of the member incoming links.
    pub from_nodes: Vec<String>,
}

/// One routing entry: of the jobs that reached `via` from `upstream`, the
/// given fraction continues toward `next`.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnSpec {
    pub upstream: String,
    pub via: String,
    pub next: String,
    pub fraction: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("link {from}>{to}: endpoint {missing} is not a declared node")]
    DanglingLink { from: String, to: String, missing: String },
    #[error("duplicate link {from}>{to}")]
    DuplicateLink { from: String, to: String },
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("routing row ({upstream}>{via}) sums to {sum} > 1")]
    RoutingMassExceeded { upstream: String, via: String, sum: f64 },
    #[error("turn ({upstream}>{via}>{next}) references a missing link")]
    TurnWithoutLink { upstream: String, via: String, next: String },
    #[error("turn fraction {fraction} for ({upstream}>{via}>{next}) outside [0,1]")]
    TurnFractionOutOfRange { upstream: String, via: String, next: String, fraction: f64 },
    #[error("phase {name} at node {node} activates no links")]
    EmptyPhase { node: String, name: String },
    #[error("phase {name} at node {node}: {from} is not an upstream neighbor")]
    PhaseLinkMissing { node: String, name: String, from: String },
    #[error("node {node}: incoming link from {from} belongs to no phase")]
    UncoveredLink { node: String, from: String },
    #[error("node {node}: phases {a} and {b} activate the same link set")]
    DuplicatePhaseSet { node: String, a: String, b: String },
    #[error("node rate {rate} at {node} must be positive")]
    NonPositiveRate { node: String, rate: f64 },
}

const ROUTING_EPS: f64 = 1e-9;

/// Validates a topology spec into a [`NetworkGraph`].
///
/// Node and link ordering is lexicographic by id, so equal specs always
/// produce identical graphs and every downstream argmax tie-break is
/// reproducible.
pub fn build_network(spec: &TopologySpec) -> Result<NetworkGraph, TopologyError> {
    let mut node_ids: Vec<String> = spec.nodes.iter().map(|n| n.id.clone()).collect();
    node_ids.sort();
    for pair in node_ids.windows(2) {
        if pair[0] == pair[1] {
            return Err(TopologyError::DuplicateNode(pair[0].clone()));
        }
    }
    let index_of = |id: &str| -> Option<NodeIdx> {
        node_ids.binary_search_by(|n| n.as_str().cmp(id)).ok()
    };

    for n in &spec.nodes {
        if n.rate <= 0.0 {
            return Err(TopologyError::NonPositiveRate { node: n.id.clone(), rate: n.rate });
        }
    }

    let mut link_specs: Vec<&LinkSpec> = spec.links.iter().collect();
    link_specs.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
    let mut links = Vec::with_capacity(link_specs.len());
    let mut link_index: BTreeMap<(NodeIdx, NodeIdx), LinkIdx> = BTreeMap::new();
    for l in &link_specs {
        let from = index_of(&l.from).ok_or_else(|| TopologyError::DanglingLink {
            from: l.from.clone(),
            to: l.to.clone(),
            missing: l.from.clone(),
        })?;
        let to = index_of(&l.to).ok_or_else(|| TopologyError::DanglingLink {
            from: l.from.clone(),
            to: l.to.clone(),
            missing: l.to.clone(),
        })?;
        if link_index.insert((from, to), links.len()).is_some() {
            return Err(TopologyError::DuplicateLink { from: l.from.clone(), to: l.to.clone() });
        }
        links.push(Link { from, to, travel: l.travel });
    }

    let mut in_links = vec![Vec::new(); node_ids.len()];
    let mut out_links = vec![Vec::new(); node_ids.len()];
    for (idx, link) in links.iter().enumerate() {
        in_links[link.to].push(idx);
        out_links[link.from].push(idx);
    }

    // Phases, grouped per node in declaration order.
    let mut phases: Vec<Vec<Phase>> = vec![Vec::new(); node_ids.len()];
    for p in &spec.phases {
        let node = index_of(&p.node).ok_or_else(|| TopologyError::PhaseLinkMissing {
            node: p.node.clone(),
            name: p.name.clone(),
            from: p.node.clone(),
        })?;
        if p.from_nodes.is_empty() {
            return Err(TopologyError::EmptyPhase { node: p.node.clone(), name: p.name.clone() });
        }
        let mut members = Vec::new();
        for from_id in &p.from_nodes {
            let from = index_of(from_id).ok_or_else(|| TopologyError::PhaseLinkMissing {
                node: p.node.clone(),
                name: p.name.clone(),
                from: from_id.clone(),
            })?;
            let link = *link_index.get(&(from, node)).ok_or_else(|| {
                TopologyError::PhaseLinkMissing {
                    node: p.node.clone(),
                    name: p.name.clone(),
                    from: from_id.clone(),
                }
            })?;
            members.push(link);
        }
        members.sort_unstable();
        members.dedup();
        phases[node].push(Phase { name: p.name.clone(), links: members });
    }

    // Every incoming link must belong to a phase; activation sets at one
    // node must be pairwise distinct.
    for node in 0..node_ids.len() {
        let mut covered: BTreeSet<LinkIdx> = BTreeSet::new();
        for phase in &phases[node] {
            covered.extend(phase.links.iter().copied());
        }
        for &l in &in_links[node] {
            if !covered.contains(&l) {
                return Err(TopologyError::UncoveredLink {
                    node: node_ids[node].clone(),
                    from: node_ids[links[l].from].clone(),
                });
            }
        }
        for i in 0..phases[node].len() {
            for j in i + 1..phases[node].len() {
                if phases[node][i].links == phases[node][j].links {
                    return Err(TopologyError::DuplicatePhaseSet {
                        node: node_ids[node].clone(),
                        a: phases[node][i].name.clone(),
                        b: phases[node][j].name.clone(),
                    });
                }
            }
        }
    }

    // Routing rows, indexed by in-link; residual mass is the exit probability.
    let mut rows = vec![RoutingRow::exit_only(); links.len()];
    for t in &spec.turns {
        let resolve = || -> Option<(LinkIdx, LinkIdx)> {
            let h = index_of(&t.upstream)?;
            let s = index_of(&t.via)?;
            let i = index_of(&t.next)?;
            Some((*link_index.get(&(h, s))?, *link_index.get(&(s, i))?))
        };
        let (in_link, out_link) = resolve().ok_or_else(|| TopologyError::TurnWithoutLink {
            upstream: t.upstream.clone(),
            via: t.via.clone(),
            next: t.next.clone(),
        })?;
        if !(0.0..=1.0).contains(&t.fraction) {
            return Err(TopologyError::TurnFractionOutOfRange {
                upstream: t.upstream.clone(),
                via: t.via.clone(),
                next: t.next.clone(),
                fraction: t.fraction,
            });
        }
        rows[in_link].turns.push((out_link, t.fraction));
    }
    for (in_link, row) in rows.iter_mut().enumerate() {
        row.turns.sort_by_key(|(l, _)| *l);
        let sum: f64 = row.turns.iter().map(|(_, f)| f).sum();
        if sum > 1.0 + ROUTING_EPS {
            let l = &links[in_link];
            return Err(TopologyError::RoutingMassExceeded {
                upstream: node_ids[l.from].clone(),
                via: node_ids[l.to].clone(),
                sum,
            });
        }
        row.exit = (1.0 - sum).max(0.0);
    }

    Ok(NetworkGraph { node_ids, links, in_links, out_links, phases, routing: RoutingTable { rows } })
}

/// Compass direction used by the grid generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    const ALL: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    fn opposite(self) -> Dir {
        match self {
            Dir::North => Dir::South,
            Dir::East => Dir::West,
            Dir::South => Dir::North,
            Dir::West => Dir::East,
        }
    }

    /// Left turn relative to a vehicle heading *toward* this direction.
    fn left(self) -> Dir {
        match self {
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
            Dir::East => Dir::North,
        }
    }

    fn right(self) -> Dir {
        self.left().opposite()
    }

    fn offset(self, row: i64, col: i64) -> (i64, i64) {
        match self {
            Dir::North => (row - 1, col),
            Dir::South => (row + 1, col),
            Dir::East => (row, col + 1),
            Dir::West => (row, col - 1),
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dir::North => "n",
            Dir::East => "e",
            Dir::South => "s",
            Dir::West => "w",
        };
        f.write_str(s)
    }
}

/// Fraction of jobs that continue straight through a grid node; the rest is
/// split evenly between the two turns. Mass aimed off the grid exits.
pub const GRID_STRAIGHT_FRACTION: f64 = 0.6;

/// Default free-flow travel time of generated grid links, in slots.
pub const GRID_TRAVEL_SLOTS: u32 = 10;

/// Generates a two-way `rows x cols` grid with per-node NS/EW phases and
/// straight-biased routing. With `boundary_sources`, every missing neighbor
/// direction of a boundary node gets a feeder node and an entry link.
pub fn grid_network(rows: usize, cols: usize, boundary_sources: bool) -> TopologySpec {
    assert!(rows >= 1 && cols >= 1, "grid must have at least one node");
    let grid_id = |r: usize, c: usize| format!("n{:02}_{:02}", r, c);
    let source_id = |d: Dir, r: usize, c: usize| format!("src_{}_{:02}_{:02}", d, r, c);
    let in_grid = |r: i64, c: i64| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols;

    let mut spec = TopologySpec::default();
    for r in 0..rows {
        for c in 0..cols {
            spec.nodes.push(NodeSpec { id: grid_id(r, c), rate: 1.0 });
        }
    }

    // Upstream endpoint feeding node (r, c) from direction `d`, if any.
    let feeder = |d: Dir, r: usize, c: usize| -> Option<String> {
        let (nr, nc) = d.offset(r as i64, c as i64);
        if in_grid(nr, nc) {
            Some(grid_id(nr as usize, nc as usize))
        } else if boundary_sources {
            Some(source_id(d, r, c))
        } else {
            None
        }
    };

    for r in 0..rows {
        for c in 0..cols {
            let id = grid_id(r, c);
            for d in Dir::ALL {
                let (nr, nc) = d.offset(r as i64, c as i64);
                if in_grid(nr, nc) {
                    spec.links.push(LinkSpec {
                        from: id.clone(),
                        to: grid_id(nr as usize, nc as usize),
                        travel: GRID_TRAVEL_SLOTS,
                    });
                } else if boundary_sources {
                    let src = source_id(d, r, c);
                    spec.nodes.push(NodeSpec { id: src.clone(), rate: 1.0 });
                    spec.links.push(LinkSpec { from: src, to: id.clone(), travel: GRID_TRAVEL_SLOTS });
                }
            }

            let ns: Vec<String> =
                [Dir::North, Dir::South].into_iter().filter_map(|d| feeder(d, r, c)).collect();
            let ew: Vec<String> =
                [Dir::East, Dir::West].into_iter().filter_map(|d| feeder(d, r, c)).collect();
            if !ns.is_empty() {
                spec.phases.push(PhaseSpec { node: id.clone(), name: "ns".into(), from_nodes: ns });
            }
            if !ew.is_empty() {
                spec.phases.push(PhaseSpec { node: id.clone(), name: "ew".into(), from_nodes: ew });
            }

            // Turns for every in-link: straight bias, even turn split,
            // off-grid mass left implicit (it becomes the exit residual).
            for arrival_dir in Dir::ALL {
                let Some(upstream) = feeder(arrival_dir, r, c) else { continue };
                let heading = arrival_dir.opposite();
                let turn_fraction = (1.0 - GRID_STRAIGHT_FRACTION) / 2.0;
                for (out_dir, fraction) in [
                    (heading, GRID_STRAIGHT_FRACTION),
                    (heading.left(), turn_fraction),
                    (heading.right(), turn_fraction),
                ] {
                    let (tr, tc) = out_dir.offset(r as i64, c as i64);
                    if in_grid(tr, tc) {
                        spec.turns.push(TurnSpec {
                            upstream: upstream.clone(),
                            via: id.clone(),
                            next: grid_id(tr as usize, tc as usize),
                            fraction,
                        });
                    }
                }
            }
        }
    }
    spec
}

/// Entry links of a topology spec: links whose upstream endpoint has no
/// incoming links of its own (feeder/source nodes).
pub fn entry_links(spec: &TopologySpec) -> Vec<(String, String)> {
    let has_in: BTreeSet<&str> = spec.links.iter().map(|l| l.to.as_str()).collect();
    let mut entries: Vec<(String, String)> = spec
        .links
        .iter()
        .filter(|l| !has_in.contains(l.from.as_str()))
        .map(|l| (l.from.clone(), l.to.clone()))
        .collect();
    entries.sort();
    entries
}

/// Small four-node ring (A>C, B>C, C>D, D>A) used in docs, examples and
/// tests: node C arbitrates between its two upstream feeders.
pub fn four_node_example() -> TopologySpec {
    TopologySpec {
        nodes: ["a", "b", "c", "d"]
            .iter()
            .map(|id| NodeSpec { id: id.to_string(), rate: 1.0 })
            .collect(),
        links: [("a", "c"), ("b", "c"), ("c", "d"), ("d", "a")]
            .iter()
            .map(|(f, t)| LinkSpec { from: f.to_string(), to: t.to_string(), travel: 0 })
            .collect(),
        phases: vec![
            PhaseSpec { node: "a".into(), name: "p0".into(), from_nodes: vec!["d".into()] },
            PhaseSpec { node: "c".into(), name: "p0".into(), from_nodes: vec!["a".into()] },
            PhaseSpec { node: "c".into(), name: "p1".into(), from_nodes: vec!["b".into()] },
            PhaseSpec { node: "d".into(), name: "p0".into(), from_nodes: vec!["c".into()] },
        ],
        turns: vec![
            TurnSpec { upstream: "a".into(), via: "c".into(), next: "d".into(), fraction: 1.0 },
            TurnSpec { upstream: "b".into(), via: "c".into(), next: "d".into(), fraction: 1.0 },
            TurnSpec { upstream: "c".into(), via: "d".into(), next: "a".into(), fraction: 0.5 },
            TurnSpec { upstream: "d".into(), via: "a".into(), next: "c".into(), fraction: 0.5 },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_node_spec() -> TopologySpec {
        four_node_example()
    }

    #[test]
    fn four_node_network_neighbors() {
        let g = build_network(&four_node_spec()).unwrap();
        let c = g.node_index("c").unwrap();
        let ins: Vec<&str> = g.in_neighbors(c).map(|n| g.node_id(n)).collect();
        assert_eq!(ins, ["a", "b"]);
        let outs: Vec<&str> = g.out_neighbors(c).map(|n| g.node_id(n)).collect();
        assert_eq!(outs, ["d"]);
        assert_eq!(g.link_count(), 4);
    }

    #[test]
    fn single_node_no_links() {
        let spec = TopologySpec {
            nodes: vec![NodeSpec { id: "x".into(), rate: 1.0 }],
            ..TopologySpec::default()
        };
        let g = build_network(&spec).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.link_count(), 0);
        assert!(g.in_links(0).is_empty());
        assert!(g.out_links(0).is_empty());
    }

    #[test]
    fn dangling_link_rejected() {
        let mut spec = four_node_spec();
        spec.links.push(LinkSpec { from: "a".into(), to: "zz".into(), travel: 0 });
        assert!(matches!(build_network(&spec), Err(TopologyError::DanglingLink { .. })));
    }

    #[test]
    fn routing_mass_exceeded_rejected() {
        let mut spec = four_node_spec();
        spec.turns.push(TurnSpec {
            upstream: "c".into(),
            via: "d".into(),
            next: "a".into(),
            fraction: 0.7,
        });
        assert!(matches!(build_network(&spec), Err(TopologyError::RoutingMassExceeded { .. })));
    }

    #[test]
    fn empty_phase_rejected() {
        let mut spec = four_node_spec();
        spec.phases.push(PhaseSpec { node: "a".into(), name: "bad".into(), from_nodes: vec![] });
        assert!(matches!(build_network(&spec), Err(TopologyError::EmptyPhase { .. })));
    }

    #[test]
    fn uncovered_in_link_rejected() {
        let mut spec = four_node_spec();
        spec.phases.retain(|p| !(p.node == "c" && p.name == "p1"));
        assert!(matches!(build_network(&spec), Err(TopologyError::UncoveredLink { .. })));
    }

    #[test]
    fn exit_is_routing_residual() {
        let g = build_network(&four_node_spec()).unwrap();
        let c = g.node_index("c").unwrap();
        let d = g.node_index("d").unwrap();
        let a = g.node_index("a").unwrap();
        let cd = g.link_index(c, d).unwrap();
        let da = g.link_index(d, a).unwrap();
        let row = &g.routing().rows[cd];
        assert_eq!(row.turns, vec![(da, 0.5)]);
        assert!((row.exit - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_1x1_has_four_entries_two_phases() {
        let spec = grid_network(1, 1, true);
        let g = build_network(&spec).unwrap();
        let node = g.node_index("n00_00").unwrap();
        assert_eq!(g.in_links(node).len(), 4);
        assert_eq!(g.phases(node).len(), 2);
        assert_eq!(entry_links(&spec).len(), 4);
    }

    #[test]
    fn grid_2x2_link_count() {
        let spec = grid_network(2, 2, false);
        assert_eq!(spec.nodes.len(), 4);
        assert_eq!(spec.links.len(), 8);
        build_network(&spec).unwrap();
    }

    #[test]
    fn grid_4x4_counts_and_phases() {
        let spec = grid_network(4, 4, true);
        let internal = spec
            .links
            .iter()
            .filter(|l| l.from.starts_with('n') && l.to.starts_with('n'))
            .count();
        assert_eq!(internal, 48);
        assert_eq!(spec.nodes.iter().filter(|n| n.id.starts_with('n')).count(), 16);
        // Boundary feeders: 4 corners x 2 + 8 edge nodes x 1.
        assert_eq!(entry_links(&spec).len(), 16);
        let g = build_network(&spec).unwrap();
        for node in 0..g.node_count() {
            if !g.in_links(node).is_empty() {
                assert_eq!(g.phases(node).len(), 2, "node {}", g.node_id(node));
            }
        }
    }

    #[test]
    fn grid_routing_rows_within_mass() {
        let g = build_network(&grid_network(3, 3, true)).unwrap();
        for row in &g.routing().rows {
            let sum: f64 = row.turns.iter().map(|(_, f)| f).sum();
            assert!(sum <= 1.0 + 1e-12);
            assert!((sum + row.exit - 1.0).abs() < 1e-12);
        }
        // Interior in-links route all mass onward; boundary-facing ones exit.
        let center = g.node_index("n01_01").unwrap();
        for &l in g.in_links(center) {
            if g.node_id(g.link(l).from).starts_with('n') {
                assert!(g.routing().rows[l].exit.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn build_network_is_deterministic() {
        let mut spec = four_node_spec();
        let g1 = build_network(&spec).unwrap();
        // Permuting declaration order must not change the result.
        spec.nodes.reverse();
        spec.links.reverse();
        spec.turns.reverse();
        let g2 = build_network(&spec).unwrap();
        assert_eq!(g1, g2);
    }
}
