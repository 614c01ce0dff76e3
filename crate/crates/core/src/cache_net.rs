//! Cache inventory, content catalog, placement state, contact graphs and transfer bookkeeping.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mobility::{coverage_contains, CoverageDisc, Point, RoadGrid, VehicleKinematics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheKind {
    FixedStraight,
    FixedIntersection,
    Mobile,
}

impl CacheKind {
    pub fn is_fixed(self) -> bool {
        !matches!(self, CacheKind::Mobile)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCache {
    pub id: usize,
    pub kind: CacheKind,
    pub storage_mb: f64,
    pub processing_units: f64,
    pub units_per_request: f64,
    pub coverage_diameter: f64,
    /// Location of a fixed cache; ignored for mobile ones.
    pub anchor: Point,
    pub kinematics: Option<VehicleKinematics>,
}

impl EdgeCache {
    pub fn max_requests(&self) -> u32 {
        (self.processing_units / self.units_per_request + 1e-9).floor() as u32
    }

    pub fn position(&self) -> Point {
        self.kinematics.map(|k| k.position).unwrap_or(self.anchor)
    }

    pub fn coverage(&self) -> CoverageDisc {
        CoverageDisc { center: self.position(), diameter: self.coverage_diameter }
    }

    pub fn is_fixed(&self) -> bool {
        self.kind.is_fixed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Content {
    pub id: usize,
    pub priority: Priority,
    pub size_mb: f64,
    /// Popularity rank starting at 1 (low-priority contents only).
    pub popularity_rank: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContentRef {
    Low(usize),
    High(usize),
}

/// Low placement `y` (N x L), high placement on fixed caches `x` (F x H) and
/// redirection counts `z` (N x N x L, z[i][j][l] = requests for l at j sent to i).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlacementState {
    pub n: usize,
    pub f: usize,
    pub n_low: usize,
    pub n_high: usize,
    y: Vec<u8>,
    x: Vec<u8>,
    z: Vec<u32>,
}

impl PlacementState {
    pub fn new(n: usize, f: usize, n_low: usize, n_high: usize) -> Self {
        assert!(f <= n, "fixed caches are a prefix of all caches");
        PlacementState { n, f, n_low, n_high, y: vec![0; n * n_low], x: vec![0; f * n_high], z: vec![0; n * n * n_low] }
    }

    pub fn y(&self, i: usize, l: usize) -> bool {
        self.y[i * self.n_low + l] != 0
    }
    pub fn x(&self, f: usize, h: usize) -> bool {
        self.x[f * self.n_high + h] != 0
    }
    pub fn z(&self, i: usize, j: usize, l: usize) -> u32 {
        self.z[(i * self.n + j) * self.n_low + l]
    }
    pub fn set_y(&mut self, i: usize, l: usize, v: bool) {
        self.y[i * self.n_low + l] = v as u8;
    }
    pub fn set_x(&mut self, f: usize, h: usize, v: bool) {
        self.x[f * self.n_high + h] = v as u8;
    }
    pub fn set_z(&mut self, i: usize, j: usize, l: usize, v: u32) {
        self.z[(i * self.n + j) * self.n_low + l] = v;
    }

    pub fn y_raw(&self) -> &[u8] {
        &self.y
    }
    pub fn x_raw(&self) -> &[u8] {
        &self.x
    }
    pub fn z_raw(&self) -> &[u32] {
        &self.z
    }

    /// Requests cache `i` has committed to serve for others.
    pub fn serve_load(&self, i: usize) -> u32 {
        self.z[i * self.n * self.n_low..(i + 1) * self.n * self.n_low].iter().sum()
    }

    pub fn low_stored_mb(&self, i: usize, low_sizes: &[f64]) -> f64 {
        (0..self.n_low).filter(|&l| self.y(i, l)).map(|l| low_sizes[l]).sum()
    }

    pub fn high_stored_mb(&self, f: usize, high_sizes: &[f64]) -> f64 {
        if f >= self.f {
            return 0.0;
        }
        (0..self.n_high).filter(|&h| self.x(f, h)).map(|h| high_sizes[h]).sum()
    }

    /// Drops every redirection that points at cache `i` for content `l`.
    pub fn clear_redirects_to(&mut self, i: usize, l: usize) {
        for j in 0..self.n {
            self.set_z(i, j, l, 0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestBatch {
    pub n_caches: usize,
    pub n_low: usize,
    counts: Vec<u32>,
}

impl RequestBatch {
    pub fn empty(n_caches: usize, n_low: usize) -> Self {
        RequestBatch { n_caches, n_low, counts: vec![0; n_caches * n_low] }
    }
    pub fn get(&self, l: usize, i: usize) -> u32 {
        self.counts[l * self.n_caches + i]
    }
    pub fn set(&mut self, l: usize, i: usize, c: u32) {
        self.counts[l * self.n_caches + i] = c;
    }
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactGraph {
    /// Cache ids, ascending.
    pub nodes: Vec<usize>,
    /// Adjacency by position in `nodes`.
    pub adj: Vec<Vec<usize>>,
}

impl ContactGraph {
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    /// Nodes within `sigma` hops of `start`, including itself.
    pub fn ball(&self, start: usize, sigma: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        dist[start] = 0;
        let mut out = vec![start];
        while let Some(v) = queue.pop_front() {
            if dist[v] == sigma {
                continue;
            }
            for &w in &self.adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    out.push(w);
                    queue.push_back(w);
                }
            }
        }
        out
    }
}

pub fn in_mutual_range(a: &EdgeCache, b: &EdgeCache, grid: &RoadGrid) -> bool {
    let pa = a.position();
    let pb = b.position();
    coverage_contains(&a.coverage(), grid.image_near(pa, pb)) && coverage_contains(&b.coverage(), grid.image_near(pb, pa))
}

pub fn build_contact_graph(targets: &[&EdgeCache], grid: &RoadGrid) -> ContactGraph {
    let mut sorted: Vec<&EdgeCache> = targets.to_vec();
    sorted.sort_by_key(|c| c.id);
    let nodes: Vec<usize> = sorted.iter().map(|c| c.id).collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    for a in 0..sorted.len() {
        for b in a + 1..sorted.len() {
            if in_mutual_range(sorted[a], sorted[b], grid) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    ContactGraph { nodes, adj }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominatingSet {
    /// Cache ids, in pick order.
    pub members: Vec<usize>,
    pub radius: usize,
}

/// Greedy sigma-hop dominating set.
///
/// 1. Every node starts uncovered.
/// 2. Pick the node whose sigma-ball holds the most uncovered nodes; ties go to the lowest id.
/// 3. Mark its ball covered and repeat until nothing is uncovered.
pub fn dominating_set(g: &ContactGraph, sigma: usize) -> DominatingSet {
    let sigma = sigma.max(1);
    let balls: Vec<Vec<usize>> = (0..g.nodes.len()).map(|v| g.ball(v, sigma)).collect();
    let mut covered = vec![false; g.nodes.len()];
    let mut left = g.nodes.len();
    let mut members = Vec::new();
    while left > 0 {
        let (best, _) = balls
            .iter()
            .enumerate()
            .map(|(v, b)| (v, b.iter().filter(|&&w| !covered[w]).count()))
            .fold((usize::MAX, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        for &w in &balls[best] {
            if !covered[w] {
                covered[w] = true;
                left -= 1;
            }
        }
        members.push(g.nodes[best]);
    }
    DominatingSet { members, radius: sigma }
}

/// True when every node lies within `sigma` hops of some member (members given as cache ids).
pub fn dominates(g: &ContactGraph, members: &[usize], sigma: usize) -> bool {
    let mut covered = vec![false; g.nodes.len()];
    for m in members {
        if let Some(v) = g.nodes.iter().position(|n| n == m) {
            for w in g.ball(v, sigma) {
                covered[w] = true;
            }
        }
    }
    covered.iter().all(|&c| c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// MB per second.
    pub rate: f64,
    /// Seconds.
    pub tau: f64,
}

/// Bytes (MB) that fit in the sojourn window, clamped to the content size.
pub fn transferable_bytes(placed: bool, sojourn: f64, link: &Link, size_mb: f64) -> f64 {
    if !placed {
        return 0.0;
    }
    ((sojourn - link.tau).max(0.0) * link.rate).min(size_mb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthMetric {
    #[default]
    Hops,
    Euclidean,
}

/// Pairwise distances between caches under the configured metric; `INFINITY` when unreachable.
///
/// The hop graph joins caches in mutual coverage, links all fixed caches through the
/// backhaul, and attaches each mobile cache to its closest fixed cache.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    d: Vec<f64>,
}

impl DistanceTable {
    pub fn build(caches: &[EdgeCache], grid: &RoadGrid, metric: BandwidthMetric) -> Self {
        let n = caches.len();
        let mut d = vec![f64::INFINITY; n * n];
        match metric {
            BandwidthMetric::Euclidean => {
                for i in 0..n {
                    for j in 0..n {
                        d[i * n + j] = grid.torus_dist(caches[i].position(), caches[j].position()) / 1000.0;
                    }
                }
            }
            BandwidthMetric::Hops => {
                let adj = hop_graph(caches, grid);
                for s in 0..n {
                    d[s * n + s] = 0.0;
                    let mut queue = VecDeque::from([s]);
                    while let Some(v) = queue.pop_front() {
                        for &w in &adj[v] {
                            if d[s * n + w].is_infinite() {
                                d[s * n + w] = d[s * n + v] + 1.0;
                                queue.push_back(w);
                            }
                        }
                    }
                }
            }
        }
        DistanceTable { n, d }
    }

    pub fn from_matrix(n: usize, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), n * n);
        DistanceTable { n, d }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

fn hop_graph(caches: &[EdgeCache], grid: &RoadGrid) -> Vec<Vec<usize>> {
    let n = caches.len();
    let mut adj = vec![Vec::new(); n];
    let link = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    let fixed: Vec<usize> = (0..n).filter(|&i| caches[i].is_fixed()).collect();
    for (k, &a) in fixed.iter().enumerate() {
        for &b in &fixed[k + 1..] {
            link(a, b, &mut adj);
        }
    }
    for i in 0..n {
        if caches[i].is_fixed() {
            continue;
        }
        let p = caches[i].position();
        let nearest = fixed.iter().copied().min_by(|&a, &b| {
            let da = grid.torus_dist(p, caches[a].position());
            let db = grid.torus_dist(p, caches[b].position());
            da.total_cmp(&db).then(a.cmp(&b))
        });
        if let Some(f) = nearest {
            link(i, f, &mut adj);
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            if in_mutual_range(&caches[a], &caches[b], grid) {
                link(a, b, &mut adj);
            }
        }
    }
    for row in adj.iter_mut() {
        row.sort_unstable();
    }
    adj
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Cloud,
    Cache(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Download { source: Endpoint, dest: usize, content: ContentRef, mb: f64 },
    Eviction { cache: usize, content: ContentRef, mb: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransferLog {
    pub entries: Vec<LogEntry>,
}

impl TransferLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: TransferLog) {
        self.entries.extend(other.entries);
    }

    /// Low-priority contents moved between caches.
    pub fn migrations(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, LogEntry::Download { source: Endpoint::Cache(_), content: ContentRef::Low(_), .. }))
            .count()
    }

    pub fn cloud_downloads(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, LogEntry::Download { source: Endpoint::Cloud, .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flip {
    Y { cache: usize, content: usize },
    X { fixed: usize, content: usize },
}

fn nearest_holder(holders: impl Iterator<Item = usize>, dest: usize, dist: &DistanceTable) -> Endpoint {
    holders
        .filter(|&i| i != dest && dist.get(i, dest).is_finite())
        .min_by(|&a, &b| dist.get(a, dest).total_cmp(&dist.get(b, dest)).then(a.cmp(&b)))
        .map(Endpoint::Cache)
        .unwrap_or(Endpoint::Cloud)
}

/// Applies flips in order; each 0->1 flip downloads from the nearest current holder
/// (or the cloud), each 1->0 flip is logged as an eviction.
pub fn apply_placement_delta(
    state: &PlacementState,
    flips: &[Flip],
    dist: &DistanceTable,
    low_sizes: &[f64],
    high_sizes: &[f64],
) -> Result<(PlacementState, TransferLog)> {
    let mut next = state.clone();
    let mut log = TransferLog::default();
    for flip in flips {
        match *flip {
            Flip::Y { cache, content } => {
                if cache >= state.n || content >= state.n_low {
                    return Err(Error::IndexOutOfRange(format!("y[{cache}][{content}]")));
                }
                let mb = low_sizes[content];
                let c = ContentRef::Low(content);
                if next.y(cache, content) {
                    next.set_y(cache, content, false);
                    log.entries.push(LogEntry::Eviction { cache, content: c, mb });
                } else {
                    let source = nearest_holder((0..next.n).filter(|&i| next.y(i, content)), cache, dist);
                    next.set_y(cache, content, true);
                    log.entries.push(LogEntry::Download { source, dest: cache, content: c, mb });
                }
            }
            Flip::X { fixed, content } => {
                if fixed >= state.f || content >= state.n_high {
                    return Err(Error::IndexOutOfRange(format!("x[{fixed}][{content}]")));
                }
                let mb = high_sizes[content];
                let c = ContentRef::High(content);
                if next.x(fixed, content) {
                    next.set_x(fixed, content, false);
                    log.entries.push(LogEntry::Eviction { cache: fixed, content: c, mb });
                } else {
                    let source = nearest_holder((0..next.f).filter(|&f| next.x(f, content)), fixed, dist);
                    next.set_x(fixed, content, true);
                    log.entries.push(LogEntry::Download { source, dest: fixed, content: c, mb });
                }
            }
        }
    }
    Ok((next, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Mobile cache request limit.
    A,
    /// Fixed cache request limit.
    B,
    /// Non-target mobile storage.
    C,
    /// Target mobile storage including incoming high-priority content.
    D,
    /// Fixed storage.
    E,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub cache: usize,
    pub excess: f64,
}

const EXCESS_EPS: f64 = 1e-9;

/// `high_load[i]` is the high-priority volume held or arriving at mobile cache `i`.
pub fn validate_constraints(
    state: &PlacementState,
    caches: &[EdgeCache],
    low_sizes: &[f64],
    high_sizes: &[f64],
    targets: &[usize],
    high_load: &[f64],
) -> Result<Vec<Violation>> {
    if caches.len() != state.n
        || low_sizes.len() != state.n_low
        || high_sizes.len() != state.n_high
        || high_load.len() != state.n
        || caches.iter().take(state.f).any(|c| !c.is_fixed())
        || caches.iter().skip(state.f).any(|c| c.is_fixed())
    {
        return Err(Error::Dimension(format!(
            "state {}x{} (F={}, H={}) vs {} caches, {} low, {} high, {} loads",
            state.n,
            state.n_low,
            state.f,
            state.n_high,
            caches.len(),
            low_sizes.len(),
            high_sizes.len(),
            high_load.len()
        )));
    }
    let mut out = Vec::new();
    for (i, cache) in caches.iter().enumerate() {
        let load = state.serve_load(i) as f64 - cache.max_requests() as f64;
        if load > 0.0 {
            let constraint = if cache.is_fixed() { Constraint::B } else { Constraint::A };
            out.push(Violation { constraint, cache: i, excess: load });
        }
        let mut stored = state.low_stored_mb(i, low_sizes);
        let constraint = if cache.is_fixed() {
            stored += state.high_stored_mb(i, high_sizes);
            Constraint::E
        } else {
            stored += high_load[i];
            if targets.contains(&i) {
                Constraint::D
            } else {
                Constraint::C
            }
        };
        let excess = stored - cache.storage_mb;
        if excess > EXCESS_EPS {
            out.push(Violation { constraint, cache: i, excess });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Heading;

    fn mobile(id: usize, x: f64, diameter: f64) -> EdgeCache {
        EdgeCache {
            id,
            kind: CacheKind::Mobile,
            storage_mb: 700.0,
            processing_units: 1.0,
            units_per_request: 0.2,
            coverage_diameter: diameter,
            anchor: Point::new(0.0, 0.0),
            kinematics: Some(VehicleKinematics { position: Point::new(x, 0.0), velocity: 8.0, heading: Heading::East }),
        }
    }

    fn fixed(id: usize) -> EdgeCache {
        EdgeCache {
            id,
            kind: CacheKind::FixedIntersection,
            storage_mb: 1500.0,
            processing_units: 4.0,
            units_per_request: 0.2,
            coverage_diameter: 60.0,
            anchor: Point::new(0.0, 0.0),
            kinematics: None,
        }
    }

    fn grid() -> RoadGrid {
        RoadGrid::new(4, 500.0).unwrap()
    }

    #[test]
    fn request_limits() {
        assert_eq!(fixed(0).max_requests(), 20);
        assert_eq!(mobile(0, 0.0, 10.0).max_requests(), 5);
    }

    #[test]
    fn contact_edges() {
        let a = mobile(0, 100.0, 10.0);
        let b = mobile(1, 100.0, 10.0);
        let c = mobile(2, 105.0, 10.0);
        let d = mobile(3, 200.0, 10.0);
        let g = build_contact_graph(&[&a, &b, &c, &d], &grid());
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(1, 2) && g.has_edge(2, 1));
        assert!(!g.has_edge(0, 3));
    }

    #[test]
    fn path_graph_dominated_by_middle() {
        let g = ContactGraph { nodes: vec![0, 1, 2], adj: vec![vec![1], vec![0, 2], vec![1]] };
        assert_eq!(dominating_set(&g, 1).members, vec![1]);
        let single = ContactGraph { nodes: vec![7], adj: vec![vec![]] };
        assert_eq!(dominating_set(&single, 1).members, vec![7]);
        let complete = ContactGraph { nodes: vec![3, 4, 5], adj: vec![vec![1, 2], vec![0, 2], vec![0, 1]] };
        assert_eq!(dominating_set(&complete, 1).members, vec![3]);
    }

    #[test]
    fn transfer_clamp() {
        let link = Link { rate: 10.0, tau: 0.0 };
        assert_eq!(transferable_bytes(false, 4.0, &link, 50.0), 0.0);
        assert_eq!(transferable_bytes(true, 4.0, &link, 50.0), 40.0);
        assert_eq!(transferable_bytes(true, 4.0, &link, 30.0), 30.0);
    }

    #[test]
    fn constraint_examples() {
        let caches = vec![fixed(0), mobile(1, 0.0, 10.0)];
        let st = PlacementState::new(2, 1, 1, 1);
        assert!(validate_constraints(&st, &caches, &[700.0], &[100.0], &[1], &[0.0, 0.0]).unwrap().is_empty());

        let mut st = PlacementState::new(2, 1, 1, 1);
        st.set_z(0, 1, 0, 21);
        let v = validate_constraints(&st, &caches, &[700.0], &[100.0], &[1], &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![Violation { constraint: Constraint::B, cache: 0, excess: 1.0 }]);

        let mut st = PlacementState::new(2, 1, 1, 1);
        st.set_y(1, 0, true);
        let v = validate_constraints(&st, &caches, &[700.0], &[100.0], &[1], &[0.0, 100.0]).unwrap();
        assert_eq!(v, vec![Violation { constraint: Constraint::D, cache: 1, excess: 100.0 }]);

        assert!(validate_constraints(&st, &caches, &[700.0, 1.0], &[100.0], &[1], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn placement_delta_logs() {
        let dist = DistanceTable::from_matrix(3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let mut st = PlacementState::new(3, 1, 2, 1);
        let (same, log) = apply_placement_delta(&st, &[], &dist, &[50.0, 60.0], &[90.0]).unwrap();
        assert_eq!(same, st);
        assert!(log.is_empty());

        st.set_y(0, 1, true);
        let (next, log) = apply_placement_delta(&st, &[Flip::Y { cache: 2, content: 1 }], &dist, &[50.0, 60.0], &[90.0]).unwrap();
        assert!(next.y(2, 1));
        assert_eq!(
            log.entries,
            vec![LogEntry::Download { source: Endpoint::Cache(0), dest: 2, content: ContentRef::Low(1), mb: 60.0 }]
        );

        let (next, log) = apply_placement_delta(&st, &[Flip::Y { cache: 0, content: 1 }], &dist, &[50.0, 60.0], &[90.0]).unwrap();
        assert!(!next.y(0, 1));
        assert_eq!(log.entries, vec![LogEntry::Eviction { cache: 0, content: ContentRef::Low(1), mb: 60.0 }]);

        let (_, log) = apply_placement_delta(&st, &[Flip::X { fixed: 0, content: 0 }], &dist, &[50.0, 60.0], &[90.0]).unwrap();
        assert_eq!(log.cloud_downloads(), 1);

        assert!(apply_placement_delta(&st, &[Flip::X { fixed: 1, content: 0 }], &dist, &[50.0, 60.0], &[90.0]).is_err());
    }

    #[test]
    fn hop_table_uses_backhaul() {
        let mut f1 = fixed(1);
        f1.anchor = Point::new(1000.0, 0.0);
        let caches = vec![fixed(0), f1, mobile(2, 20.0, 10.0), mobile(3, 900.0, 10.0)];
        let t = DistanceTable::build(&caches, &grid(), BandwidthMetric::Hops);
        assert_eq!(t.get(0, 1), 1.0);
        assert_eq!(t.get(2, 0), 1.0);
        assert_eq!(t.get(2, 3), 3.0);
        assert_eq!(t.get(3, 3), 0.0);
    }
}
