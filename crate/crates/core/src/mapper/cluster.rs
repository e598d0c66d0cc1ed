//! Clustering inside a single cover cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{euclidean, Scalar};

/// Clustering method applied to each pullback cell. Distances are Euclidean
/// on the record embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ClusterSpec {
    /// Single linkage cut at the first empty bin of the merge-height histogram.
    SingleLinkageGap { bins: usize },
    /// Single linkage cut at a fixed merge height.
    SingleLinkageEps { epsilon: f64 },
    /// DBSCAN; noise points become singleton clusters.
    Dbscan { epsilon: f64, min_pts: usize },
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec::SingleLinkageGap { bins: 10 }
    }
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ClusterSpec::SingleLinkageGap { bins } => bins > 0,
            ClusterSpec::SingleLinkageEps { epsilon } => epsilon > 0.0 && epsilon.is_finite(),
            ClusterSpec::Dbscan { epsilon, min_pts } => epsilon > 0.0 && epsilon.is_finite() && min_pts > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("cluster parameters must be positive: {self:?}")))
        }
    }
}

/// Minimum spanning tree of the complete Euclidean graph; its edge weights
/// are exactly the single-linkage merge heights.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimumSpanningTree<T> {
    n: usize,
    /// `(a, b, weight)`, ascending by weight.
    edges: Vec<(usize, usize, T)>,
}

impl<T: Scalar> MinimumSpanningTree<T> {
    /// Dense Prim's algorithm, `O(n²)` distance evaluations.
    pub fn build<P: AsRef<[T]>>(points: &[P]) -> Self {
        let n = points.len();
        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        if n > 1 {
            let mut in_tree = vec![false; n];
            let mut best = vec![T::infinity(); n];
            let mut parent = vec![0usize; n];
            let mut cur = 0;
            in_tree[0] = true;
            for _ in 1..n {
                let p = points[cur].as_ref();
                let mut next = usize::MAX;
                let mut next_d = T::infinity();
                for j in 0..n {
                    if in_tree[j] {
                        continue;
                    }
                    let d = euclidean(p, points[j].as_ref());
                    if d < best[j] {
                        best[j] = d;
                        parent[j] = cur;
                    }
                    if next == usize::MAX || best[j] < next_d {
                        next = j;
                        next_d = best[j];
                    }
                }
                in_tree[next] = true;
                edges.push((parent[next], next, next_d));
                cur = next;
            }
        }
        edges.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
        MinimumSpanningTree { n, edges }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Merge heights, ascending.
    pub fn heights(&self) -> Vec<T> {
        self.edges.iter().map(|e| e.2).collect()
    }

    /// Components after keeping only edges accepted by `keep`.
    fn components_by(&self, keep: impl Fn(T) -> bool) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.n);
        for &(a, b, w) in &self.edges {
            if keep(w) {
                uf.union(a, b);
            }
        }
        uf.groups()
    }

    /// Components joined by merges strictly below `threshold`.
    pub fn cut_below(&self, threshold: T) -> Vec<Vec<usize>> {
        self.components_by(|w| w < threshold)
    }

    /// Components joined by merges at most `threshold`.
    pub fn cut_at(&self, threshold: T) -> Vec<Vec<usize>> {
        self.components_by(|w| w <= threshold)
    }
}

/// First-gap cut height: merge heights are histogrammed into `bins` equal
/// bins over `[0, max height]`; the cut is the lower edge of the first empty
/// bin after the first occupied one. `None` means no gap (keep one cluster).
pub fn first_gap_threshold<T: Scalar>(heights: &[T], bins: usize) -> Option<T> {
    let max = heights.iter().copied().fold(T::zero(), T::max);
    if heights.is_empty() || max <= T::zero() || bins < 2 {
        return None;
    }
    let width = max / T::from_usize_lossy(bins);
    let mut counts = vec![0usize; bins];
    for &h in heights {
        let b = (h / width).floor().to_usize().unwrap_or(bins - 1).min(bins - 1);
        counts[b] += 1;
    }
    let first_occupied = counts.iter().position(|&c| c > 0)?;
    let gap = counts[first_occupied..].iter().position(|&c| c == 0)? + first_occupied;
    Some(width * T::from_usize_lossy(gap))
}

/// Partitions `points` into clusters of local indices. Clusters are sorted
/// by their smallest member and each cluster is ascending.
pub fn cluster_points<T: Scalar, P: AsRef<[T]>>(points: &[P], spec: &ClusterSpec) -> Vec<Vec<usize>> {
    let n = points.len();
    if n <= 1 {
        return if n == 1 { vec![vec![0]] } else { vec![] };
    }
    match *spec {
        ClusterSpec::SingleLinkageGap { bins } => {
            let mst = MinimumSpanningTree::build(points);
            match first_gap_threshold(&mst.heights(), bins) {
                Some(t) => mst.cut_below(t),
                None => vec![(0..n).collect()],
            }
        }
        ClusterSpec::SingleLinkageEps { epsilon } => {
            MinimumSpanningTree::build(points).cut_at(T::from_f64_lossy(epsilon))
        }
        ClusterSpec::Dbscan { epsilon, min_pts } => dbscan(points, T::from_f64_lossy(epsilon), min_pts),
    }
}

/// Density-based clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `epsilon`. Border points join the first
/// cluster, in index order, that reaches them.
pub fn dbscan<T: Scalar, P: AsRef<[T]>>(points: &[P], epsilon: T, min_pts: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(points[i].as_ref(), points[j].as_ref()) <= epsilon)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if label[i].is_some() || !core[i] {
            continue;
        }
        let c = clusters.len();
        let mut members = Vec::new();
        let mut stack = vec![i];
        label[i] = Some(c);
        while let Some(p) = stack.pop() {
            members.push(p);
            if !core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if label[q].is_none() {
                    label[q] = Some(c);
                    stack.push(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    for (i, l) in label.iter().enumerate() {
        if l.is_none() {
            clusters.push(vec![i]);
        }
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so group ordering is stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn blobs(spread: f64, sep: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, spread).unwrap();
        let mut pts = Vec::new();
        for c in 0..2 {
            for _ in 0..20 {
                pts.push(vec![c as f64 * sep + normal.sample(&mut rng), normal.sample(&mut rng)]);
            }
        }
        pts
    }

    /// Brute-force connected components of the graph joining pairs closer than `t`.
    fn components_oracle(pts: &[Vec<f64>], t: f64) -> Vec<Vec<usize>> {
        let n = pts.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![s];
            comp[s] = id;
            let mut members = vec![];
            while let Some(p) = stack.pop() {
                members.push(p);
                for q in 0..n {
                    let d = ((pts[p][0] - pts[q][0]).powi(2) + (pts[p][1] - pts[q][1]).powi(2)).sqrt();
                    if comp[q] == usize::MAX && d < t {
                        comp[q] = id;
                        stack.push(q);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    #[test]
    fn singleton_is_one_cluster() {
        assert_eq!(cluster_points(&[[1.0f64, 2.0]], &ClusterSpec::default()), vec![vec![0]]);
    }

    #[test]
    fn first_gap_splits_two_blobs() {
        let spread = 0.1;
        let pts = blobs(spread, 10.0 * spread);
        let clusters = cluster_points(&pts, &ClusterSpec::SingleLinkageGap { bins: 10 });
        assert_eq!(clusters, vec![(0..20).collect::<Vec<_>>(), (20..40).collect()]);
        let mst = MinimumSpanningTree::build(&pts);
        let t = first_gap_threshold(&mst.heights(), 10).unwrap();
        assert_eq!(clusters, components_oracle(&pts, t));
    }

    #[test]
    fn large_epsilon_is_one_cluster() {
        let spread = 0.1;
        let pts = blobs(spread, 10.0 * spread);
        let clusters = cluster_points(
            &pts,
            &ClusterSpec::SingleLinkageEps {
                epsilon: 100.0 * spread,
            },
        );
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 40);
    }

    #[test]
    fn evenly_spaced_points_stay_together() {
        let pts: Vec<[f64; 1]> = (0..30).map(|i| [i as f64 * 0.1]).collect();
        assert_eq!(cluster_points(&pts, &ClusterSpec::default()).len(), 1);
    }

    #[test]
    fn dbscan_noise_is_singletons() {
        let mut pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        pts.push(vec![10.0, 10.0]);
        pts.extend((0..5).map(|i| vec![20.0 + i as f64 * 0.1, 0.0]));
        let clusters = cluster_points(
            &pts,
            &ClusterSpec::Dbscan {
                epsilon: 0.15,
                min_pts: 3,
            },
        );
        assert_eq!(clusters, vec![vec![0, 1, 2, 3, 4], vec![5], vec![6, 7, 8, 9, 10]]);
    }

    #[test]
    fn gap_threshold_edge_cases() {
        assert_eq!(first_gap_threshold::<f64>(&[], 10), None);
        assert_eq!(first_gap_threshold(&[0.0, 0.0], 10), None);
        assert_eq!(first_gap_threshold(&[1.0, 1.0, 1.0], 10), None);
        assert_eq!(first_gap_threshold(&[0.1, 0.1, 1.0], 10), Some(0.2));
    }

    #[test]
    fn f32_points() {
        let pts = [[0.0f32], [0.1], [0.2], [5.0], [5.1]];
        assert_eq!(cluster_points(&pts, &ClusterSpec::default()).len(), 2);
    }
}
