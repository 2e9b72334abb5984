//! Tree-shaped logical network: BS/EC leaves under M1/M2/M3 multiplexers.
//!
//! ```text
//!                      M3
//!            ┌────────┬┴───────┬────────┐
//!           M2       M2       M2       M2
//!        ┌──┴──┐ ...
//!       M1    M1            (M1 clusters group nearby BSs)
//!     ┌─┴─┐
//!    BS  BS ...
//!    │    │
//!    EC   EC                (one EC per BS, one access link each)
//! ```
//!
//! Every node except the root has exactly one uplink. EC `i` hangs off BS `i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Bs,
    Ec,
    M1,
    M2,
    M3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub const fn new(kind: NodeKind, index: usize) -> Self {
        Self { kind, index }
    }
}

pub type LinkId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredLink {
    /// Child end (EC, BS, M1 or M2).
    pub lower: NodeId,
    /// Parent end, one level up.
    pub upper: NodeId,
    pub service_rate_bps: f64,
    pub service_rate_pps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Grid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub n_m2: usize,
    pub n_m1: usize,
    pub n_bs: usize,
    /// Side of the square deployment area.
    pub area_m: f64,
    pub layout: Layout,
    /// Uniform jitter applied to grid positions, per axis.
    pub jitter_m: f64,
    pub packet_size_bits: f64,
    pub link_rate_bps: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_m2: 4,
            n_m1: 16,
            n_bs: 64,
            area_m: 4000.0,
            layout: Layout::Grid,
            jitter_m: 0.0,
            packet_size_bits: 12_000.0,
            link_rate_bps: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub area_m: f64,
    pub packet_size_bits: f64,
    pub bs_positions: Vec<Point>,
    /// BS index -> M1 index.
    pub cluster_of: Vec<usize>,
    /// M1 index -> M2 index. Every M2 hangs off the single M3.
    pub m1_parent: Vec<usize>,
    pub n_m2: usize,
    pub links: Vec<WiredLink>,
    ec_access: Vec<LinkId>,
    bs_uplink: Vec<LinkId>,
    m1_uplink: Vec<LinkId>,
    m2_uplink: Vec<LinkId>,
}

const KMEANS_RESTARTS: usize = 2;
const KMEANS_MAX_ITERS: usize = 200;

/// Lays out base stations, clusters them by proximity, and wires the tree.
pub fn build_topology<R: Rng + ?Sized>(
    cfg: &TopologyConfig,
    rng: &mut R,
) -> Result<NetworkModel, TopologyError> {
    if cfg.n_bs == 0 {
        return Err(TopologyError::EmptyLevel("bs"));
    }
    if cfg.n_m1 == 0 {
        return Err(TopologyError::EmptyLevel("m1"));
    }
    if cfg.n_m2 == 0 {
        return Err(TopologyError::EmptyLevel("m2"));
    }
    if cfg.n_bs % cfg.n_m1 != 0 {
        return Err(TopologyError::UnevenClusters {
            n_bs: cfg.n_bs,
            n_clusters: cfg.n_m1,
        });
    }
    if cfg.n_m1 < cfg.n_m2 {
        return Err(TopologyError::TooManyClusters {
            k: cfg.n_m2,
            n: cfg.n_m1,
        });
    }

    let bs_positions = layout_positions(cfg, rng);
    let cluster_of = cluster_bs(&bs_positions, cfg.n_m1, rng)?;

    let centroids: Vec<Point> = (0..cfg.n_m1)
        .map(|c| centroid(bs_positions.iter().zip(&cluster_of).filter(|(_, &l)| l == c).map(|(p, _)| *p)))
        .collect();
    let m1_parent = cluster_bs(&centroids, cfg.n_m2, rng)?;

    let pps = cfg.link_rate_bps / cfg.packet_size_bits;
    let mut links = Vec::with_capacity(2 * cfg.n_bs + cfg.n_m1 + cfg.n_m2);
    let mut push = |lower: NodeId, upper: NodeId| {
        links.push(WiredLink {
            lower,
            upper,
            service_rate_bps: cfg.link_rate_bps,
            service_rate_pps: pps,
        });
        links.len() - 1
    };
    let ec_access = (0..cfg.n_bs)
        .map(|i| push(NodeId::new(NodeKind::Ec, i), NodeId::new(NodeKind::Bs, i)))
        .collect();
    let bs_uplink = (0..cfg.n_bs)
        .map(|i| push(NodeId::new(NodeKind::Bs, i), NodeId::new(NodeKind::M1, cluster_of[i])))
        .collect();
    let m1_uplink = (0..cfg.n_m1)
        .map(|i| push(NodeId::new(NodeKind::M1, i), NodeId::new(NodeKind::M2, m1_parent[i])))
        .collect();
    let m2_uplink = (0..cfg.n_m2)
        .map(|i| push(NodeId::new(NodeKind::M2, i), NodeId::new(NodeKind::M3, 0)))
        .collect();

    Ok(NetworkModel {
        area_m: cfg.area_m,
        packet_size_bits: cfg.packet_size_bits,
        bs_positions,
        cluster_of,
        m1_parent,
        n_m2: cfg.n_m2,
        links,
        ec_access,
        bs_uplink,
        m1_uplink,
        m2_uplink,
    })
}

fn layout_positions<R: Rng + ?Sized>(cfg: &TopologyConfig, rng: &mut R) -> Vec<Point> {
    match cfg.layout {
        Layout::Uniform => (0..cfg.n_bs)
            .map(|_| Point::new(rng.random::<f64>() * cfg.area_m, rng.random::<f64>() * cfg.area_m))
            .collect(),
        Layout::Grid => {
            let cols = (cfg.n_bs as f64).sqrt().ceil() as usize;
            let rows = cfg.n_bs.div_ceil(cols);
            let dx = cfg.area_m / cols as f64;
            let dy = cfg.area_m / rows as f64;
            (0..cfg.n_bs)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    let mut p = Point::new((c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy);
                    if cfg.jitter_m > 0.0 {
                        p.x += rng.random_range(-cfg.jitter_m..=cfg.jitter_m);
                        p.y += rng.random_range(-cfg.jitter_m..=cfg.jitter_m);
                        p.x = p.x.clamp(0.0, cfg.area_m);
                        p.y = p.y.clamp(0.0, cfg.area_m);
                    }
                    p
                })
                .collect()
        }
    }
}

fn centroid(points: impl Iterator<Item = Point>) -> Point {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    if n == 0 {
        Point::default()
    } else {
        Point::new(sx / n as f64, sy / n as f64)
    }
}

/// Index of the nearest centroid; equidistant centroids resolve to the lowest index.
fn nearest(p: Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = p.distance_sq(*c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// k-means clustering with seeded k-means++ initialisation and restarts.
///
/// Returns one label per point. Labels are renumbered in order of first
/// appearance, so point 0 is always in cluster 0.
pub fn cluster_bs<R: Rng + ?Sized>(
    positions: &[Point],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, TopologyError> {
    if k == 0 {
        return Err(TopologyError::NonPositiveClusters(k));
    }
    if k > positions.len() {
        return Err(TopologyError::TooManyClusters {
            k,
            n: positions.len(),
        });
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (inertia, labels) = lloyd(positions, k, rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-9) {
            best = Some((inertia, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Ok(renumber(&labels, k))
}

fn lloyd<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let (mut inertia, mut labels, mut centroids) = local_opt(points, kmeans_pp_init(points, k, rng));
    // Swap search: move one centroid onto a data point and re-optimise; keep
    // the first improvement. Lloyd alone stalls on symmetric layouts.
    'outer: for _ in 0..KMEANS_MAX_ITERS {
        for c in 0..k {
            for p in points {
                let mut trial = centroids.clone();
                trial[c] = *p;
                let (ti, tl, tc) = local_opt(points, trial);
                if ti < inertia - 1e-9 * (1.0 + inertia) {
                    (inertia, labels, centroids) = (ti, tl, tc);
                    continue 'outer;
                }
            }
        }
        break;
    }
    (inertia, labels)
}

/// Lloyd iterations followed by single-point transfers.
fn local_opt(points: &[Point], mut centroids: Vec<Point>) -> (f64, Vec<usize>, Vec<Point>) {
    let k = centroids.len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(*p, &centroids)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l].0 += p.x;
            sums[l].1 += p.y;
            sums[l].2 += 1;
        }
        for (c, (sx, sy, n)) in centroids.iter_mut().zip(&sums) {
            if *n > 0 {
                *c = Point::new(sx / *n as f64, sy / *n as f64);
            }
        }
        // Re-seed empty clusters at the point farthest from its centroid.
        for c in 0..k {
            if sums[c].2 == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = points[a].distance_sq(centroids[labels[a]]);
                        let db = points[b].distance_sq(centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty point set");
                centroids[c] = points[far];
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(*p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    hartigan(points, &mut labels, &mut centroids);
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| p.distance_sq(centroids[l]))
        .sum();
    (inertia, labels, centroids)
}

/// Single-point transfers that lower the total within-cluster sum of squares.
///
/// Lloyd iterations stall on symmetric layouts such as grids; a point move
/// from cluster `a` to `b` changes the objective by
/// `n_b/(n_b+1)·|x-c_b|² - n_a/(n_a-1)·|x-c_a|²`.
fn hartigan(points: &[Point], labels: &mut [usize], centroids: &mut [Point]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for _ in 0..KMEANS_MAX_ITERS {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = labels[i];
            if sizes[a] <= 1 {
                continue;
            }
            let na = sizes[a] as f64;
            let loss = na / (na - 1.0) * p.distance_sq(centroids[a]);
            let mut best = None;
            let mut best_delta = -1e-9;
            for b in 0..k {
                if b == a {
                    continue;
                }
                let nb = sizes[b] as f64;
                let delta = nb / (nb + 1.0) * p.distance_sq(centroids[b]) - loss;
                if delta < best_delta {
                    best_delta = delta;
                    best = Some(b);
                }
            }
            if let Some(b) = best {
                let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
                let ca = centroids[a];
                let cb = centroids[b];
                centroids[a] = Point::new((ca.x * na - p.x) / (na - 1.0), (ca.y * na - p.y) / (na - 1.0));
                centroids[b] = Point::new((cb.x * nb + p.x) / (nb + 1.0), (cb.y * nb + p.y) / (nb + 1.0));
                sizes[a] -= 1;
                sizes[b] += 1;
                labels[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Greedy k-means++: each step draws a few D²-weighted candidates and keeps
/// the one that lowers the potential most.
fn kmeans_pp_init<R: Rng + ?Sized>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let trials = 2 + (k as f64).ln() as usize;
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| p.distance_sq(centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = points.len() - 1;
                for (i, d) in d2.iter().enumerate() {
                    if target < *d {
                        chosen = i;
                        break;
                    }
                    target -= d;
                }
                chosen
            } else {
                rng.random_range(0..points.len())
            };
            let c = points[pick];
            let potential: f64 = d2.iter().zip(points).map(|(d, p)| d.min(p.distance_sq(c))).sum();
            if best.is_none_or(|(b, _)| potential < b) {
                best = Some((potential, pick));
            }
        }
        let c = points[best.expect("at least one trial").1];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.distance_sq(c));
        }
    }
    centroids
}

fn renumber(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

impl NetworkModel {
    pub fn n_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn n_ec(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn n_m1(&self) -> usize {
        self.m1_parent.len()
    }

    /// BS + M1 + M2 + M3 nodes; ECs are counted separately by [`Self::n_ec`].
    pub fn node_count(&self) -> usize {
        self.n_bs() + self.n_m1() + self.n_m2 + 1
    }

    pub fn link(&self, id: LinkId) -> &WiredLink {
        &self.links[id]
    }

    pub fn access_link(&self, ec: usize) -> LinkId {
        self.ec_access[ec]
    }

    /// The uplink of `node`, or `None` for the root.
    pub fn uplink(&self, node: NodeId) -> Option<LinkId> {
        match node.kind {
            NodeKind::Ec => Some(self.ec_access[node.index]),
            NodeKind::Bs => Some(self.bs_uplink[node.index]),
            NodeKind::M1 => Some(self.m1_uplink[node.index]),
            NodeKind::M2 => Some(self.m2_uplink[node.index]),
            NodeKind::M3 => None,
        }
    }

    /// `(bs uplink, m1 uplink, m2 uplink)` chain from a BS towards the root.
    fn ascent(&self, bs: usize) -> [LinkId; 3] {
        let m1 = self.cluster_of[bs];
        [self.bs_uplink[bs], self.m1_uplink[m1], self.m2_uplink[self.m1_parent[m1]]]
    }

    /// Number of uplinks traversed from a BS before meeting `other`'s ancestry.
    fn meet_depth(&self, a: usize, b: usize) -> usize {
        let (ca, cb) = (self.cluster_of[a], self.cluster_of[b]);
        if ca == cb {
            1
        } else if self.m1_parent[ca] == self.m1_parent[cb] {
            2
        } else {
            3
        }
    }

    /// Wired links from a user-serving BS to an EC, source to destination.
    ///
    /// The BS's own EC is one access link away; any other EC is reached
    /// through the lowest common multiplexer and the remote BS.
    pub fn wired_path(&self, from_bs: usize, to_ec: usize) -> Vec<LinkId> {
        if from_bs == to_ec {
            return vec![self.ec_access[to_ec]];
        }
        let depth = self.meet_depth(from_bs, to_ec);
        let up = self.ascent(from_bs);
        let down = self.ascent(to_ec);
        let mut path = Vec::with_capacity(2 * depth + 1);
        path.extend_from_slice(&up[..depth]);
        path.extend(down[..depth].iter().rev());
        path.push(self.ec_access[to_ec]);
        path
    }

    pub fn wired_path_len(&self, from_bs: usize, to_ec: usize) -> usize {
        if from_bs == to_ec {
            1
        } else {
            2 * self.meet_depth(from_bs, to_ec) + 1
        }
    }

    /// Links crossed when moving user context between two ECs; empty when equal.
    pub fn ec_to_ec_path(&self, from_ec: usize, to_ec: usize) -> Vec<LinkId> {
        if from_ec == to_ec {
            return Vec::new();
        }
        let mut path = vec![self.ec_access[from_ec]];
        path.extend(self.wired_path(from_ec, to_ec));
        path
    }

    /// BS with the strongest mean signal at `p`, i.e. the nearest one.
    pub fn nearest_bs(&self, p: Point) -> usize {
        nearest(p, &self.bs_positions)
    }

    /// The `k` base stations closest to `bs` (excluding itself), nearest first.
    pub fn neighbors(&self, bs: usize, k: usize) -> Vec<usize> {
        let origin = self.bs_positions[bs];
        let mut others: Vec<usize> = (0..self.n_bs()).filter(|&b| b != bs).collect();
        others.sort_by(|&a, &b| {
            origin
                .distance_sq(self.bs_positions[a])
                .total_cmp(&origin.distance_sq(self.bs_positions[b]))
                .then(a.cmp(&b))
        });
        others.truncate(k);
        others
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn default_model(seed: u64) -> NetworkModel {
        build_topology(&TopologyConfig::default(), &mut stream(seed, Stream::Topology, 0)).unwrap()
    }

    fn desk_model() -> NetworkModel {
        let cfg = TopologyConfig {
            n_m2: 2,
            n_m1: 4,
            n_bs: 16,
            area_m: 1200.0,
            ..TopologyConfig::default()
        };
        build_topology(&cfg, &mut stream(1, Stream::Topology, 0)).unwrap()
    }

    #[test]
    fn default_counts() {
        let m = default_model(1);
        assert_eq!(m.node_count(), 64 + 16 + 4 + 1);
        assert_eq!(m.links.len(), 148);
        assert_eq!(m.n_ec(), 64);
    }

    #[test]
    fn minimal_chain() {
        let cfg = TopologyConfig {
            n_m2: 1,
            n_m1: 1,
            n_bs: 1,
            ..TopologyConfig::default()
        };
        let m = build_topology(&cfg, &mut stream(0, Stream::Topology, 0)).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.links.len(), 4);
        assert_eq!(m.cluster_of, vec![0]);
        assert_eq!(m.wired_path(0, 0).len(), 1);
    }

    #[test]
    fn grid_clusters_are_balanced() {
        for seed in 0..10 {
            let m = default_model(seed);
            let mut sizes = vec![0; 16];
            for &c in &m.cluster_of {
                sizes[c] += 1;
            }
            assert!(sizes.iter().all(|&s| s == 4), "seed {seed}: {sizes:?}");
        }
    }

    #[test]
    fn uneven_cluster_count_rejected() {
        let cfg = TopologyConfig {
            n_bs: 10,
            n_m1: 4,
            ..TopologyConfig::default()
        };
        assert!(matches!(
            build_topology(&cfg, &mut stream(0, Stream::Topology, 0)),
            Err(TopologyError::UnevenClusters { .. })
        ));
    }

    #[test]
    fn kmeans_singletons() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        let labels = cluster_bs(&pts, 4, &mut stream(3, Stream::Topology, 0)).unwrap();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    /// Exhaustive oracle: the two-group split minimizing within-cluster
    /// variance over every bipartition of the 8 points.
    #[test]
    fn kmeans_recovers_two_groups() {
        let mut pts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (100.0, 50.0)] {
            for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.5), (1.2, 0.8)] {
                pts.push(Point::new(cx + dx, cy + dy));
            }
        }
        let sse = |mask: u32| -> f64 {
            let mut total = 0.0;
            for side in [0, 1] {
                let members: Vec<Point> = (0..8)
                    .filter(|i| ((mask >> i) & 1) == side)
                    .map(|i| pts[i as usize])
                    .collect();
                let c = centroid(members.iter().copied());
                total += members.iter().map(|p| p.distance_sq(c)).sum::<f64>();
            }
            total
        };
        let best_mask = (1u32..255).min_by(|a, b| sse(*a).total_cmp(&sse(*b))).unwrap();
        let labels = cluster_bs(&pts, 2, &mut stream(11, Stream::Topology, 0)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let same_oracle = ((best_mask >> i) & 1) == ((best_mask >> j) & 1);
                assert_eq!(labels[i] == labels[j], same_oracle);
            }
        }
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn kmeans_identical_points() {
        let pts = vec![Point::new(5.0, 5.0); 6];
        let a = cluster_bs(&pts, 2, &mut stream(1, Stream::Topology, 0)).unwrap();
        let b = cluster_bs(&pts, 2, &mut stream(1, Stream::Topology, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn kmeans_rejects_zero_k() {
        let pts = [Point::new(0.0, 0.0)];
        assert!(cluster_bs(&pts, 0, &mut stream(0, Stream::Topology, 0)).is_err());
        assert!(cluster_bs(&pts, 2, &mut stream(0, Stream::Topology, 0)).is_err());
    }

    #[test]
    fn kmeans_is_idempotent_for_a_seed() {
        let m = default_model(9);
        let again = cluster_bs(&m.bs_positions, 16, &mut stream(9, Stream::Topology, 1)).unwrap();
        let twice = cluster_bs(&m.bs_positions, 16, &mut stream(9, Stream::Topology, 1)).unwrap();
        assert_eq!(again, twice);
    }

    /// Independent path oracle: walk parents up from both ends until they meet.
    fn path_nodes_oracle(m: &NetworkModel, from_bs: usize, to_ec: usize) -> usize {
        if from_bs == to_ec {
            return 1;
        }
        let chain = |bs: usize| {
            let m1 = m.cluster_of[bs];
            vec![
                NodeId::new(NodeKind::Bs, bs),
                NodeId::new(NodeKind::M1, m1),
                NodeId::new(NodeKind::M2, m.m1_parent[m1]),
                NodeId::new(NodeKind::M3, 0),
            ]
        };
        let a = chain(from_bs);
        let b = chain(to_ec);
        let meet = (0..4).find(|&i| a[i] == b[i] && i > 0).unwrap();
        2 * meet + 1
    }

    #[test]
    fn path_lengths_by_level() {
        let m = default_model(2);
        let bs = 3;
        assert_eq!(m.wired_path(bs, bs).len(), 1);
        let mate = (0..64).find(|&b| b != bs && m.cluster_of[b] == m.cluster_of[bs]).unwrap();
        assert_eq!(m.wired_path(bs, mate).len(), 3);
        assert_eq!(m.ec_to_ec_path(bs, mate).len(), 4);
        let m2 = m.m1_parent[m.cluster_of[bs]];
        let far = (0..64).find(|&b| m.m1_parent[m.cluster_of[b]] != m2).unwrap();
        assert_eq!(m.wired_path(bs, far).len(), 7);
        assert_eq!(m.ec_to_ec_path(bs, far).len(), 8);
        assert!(m.ec_to_ec_path(bs, bs).is_empty());
    }

    #[test]
    fn paths_are_contiguous_and_match_oracle() {
        let m = desk_model();
        for from in 0..16 {
            for to in 0..16 {
                let path = m.wired_path(from, to);
                assert_eq!(path.len(), path_nodes_oracle(&m, from, to));
                assert_eq!(path.len(), m.wired_path_len(from, to));
                let last = m.link(*path.last().unwrap());
                assert_eq!(last.lower, NodeId::new(NodeKind::Ec, to));
                // consecutive links share an endpoint
                for w in path.windows(2) {
                    let (a, b) = (m.link(w[0]), m.link(w[1]));
                    let shared = [a.lower, a.upper].iter().any(|n| *n == b.lower || *n == b.upper);
                    assert!(shared, "{from}->{to}");
                }
                if from != to {
                    assert_eq!(m.link(path[0]).lower, NodeId::new(NodeKind::Bs, from));
                    assert_eq!(m.ec_to_ec_path(from, to).len(), path.len() + 1);
                }
            }
        }
    }

    #[test]
    fn every_non_root_node_has_one_uplink() {
        let m = default_model(4);
        let mut uplinks = std::collections::BTreeMap::new();
        for l in &m.links {
            *uplinks.entry(l.lower).or_insert(0) += 1;
            assert_ne!(l.lower.kind, NodeKind::M3);
        }
        assert_eq!(uplinks.len(), 64 + 64 + 16 + 4);
        assert!(uplinks.values().all(|&n| n == 1));
    }

    #[test]
    fn neighbors_are_nearest_first() {
        let m = desk_model();
        let n = m.neighbors(5, 8);
        assert_eq!(n.len(), 8);
        assert!(!n.contains(&5));
        let d: Vec<f64> = n.iter().map(|&b| m.bs_positions[5].distance(m.bs_positions[b])).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn uniform_layouts_satisfy_invariants(seed in 0u64..500) {
            let cfg = TopologyConfig { layout: Layout::Uniform, n_m2: 2, n_m1: 4, n_bs: 16, ..TopologyConfig::default() };
            let m = build_topology(&cfg, &mut stream(seed, Stream::Topology, 0)).unwrap();
            prop_assert_eq!(m.links.len(), 16 + 16 + 4 + 2);
            for p in &m.bs_positions {
                prop_assert!((0.0..=cfg.area_m).contains(&p.x) && (0.0..=cfg.area_m).contains(&p.y));
            }
            // every BS is attached to the nearest final centroid
            let centroids: Vec<Point> = (0..4).map(|c| centroid(
                m.bs_positions.iter().zip(&m.cluster_of).filter(|(_, &l)| l == c).map(|(p, _)| *p))).collect();
            for (p, &c) in m.bs_positions.iter().zip(&m.cluster_of) {
                let dc = p.distance_sq(centroids[c]);
                prop_assert!(centroids.iter().all(|o| dc <= p.distance_sq(*o) + 1e-6));
            }
        }
    }
}
