//! Ward agglomerative clustering of region embeddings.
//!
//! The merge cost between clusters `A` and `B` is the increase of the total
//! within-cluster sum of squares,
//! `|A||B| / (|A| + |B|) * ||mean(A) - mean(B)||^2`, kept up to date with the
//! Lance-Williams recurrence. Among equal costs the pair with the
//! lexicographically smallest `(lower node, higher node)` wins. Leaves are
//! numbered `0..n` in the order they were given; the merge at step `s`
//! creates node `n + s`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{region_feature_share, AggregateError, RegionEmbedding, ShareMode};
use crate::grid::{CellAssignment, CellId};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least 2 regions, got {0}")]
    TooFew(usize),
    #[error("embedding of leaf {0} is not finite")]
    NonFinite(usize),
    #[error("embeddings have inconsistent lengths")]
    Ragged,
    #[error("k = {k} is outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("cuts are not a one-split refinement: {0}")]
    NotNested(String),
    #[error(transparent)]
    Shares(#[from] AggregateError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge<T> {
    /// Smaller node id.
    pub left: usize,
    pub right: usize,
    /// Ward merge cost.
    pub distance: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram<T> {
    pub leaves: Vec<CellId>,
    pub merges: Vec<Merge<T>>,
}

impl<T: Scalar> Dendrogram<T> {
    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// The last `n` merges (the top of the tree).
    pub fn top(&self, n: usize) -> &[Merge<T>] {
        &self.merges[self.merges.len().saturating_sub(n)..]
    }
}

/// Upper-triangular pairwise storage.
struct Condensed<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Condensed<T> {
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j - i - 1
    }

    fn get(&self, i: usize, j: usize) -> T {
        self.data[self.index(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.index(i, j);
        self.data[k] = v;
    }
}

/// Ordering key of a candidate pair: cost, then node ids.
#[derive(Clone, Copy)]
struct PairKey<T> {
    cost: T,
    lo: usize,
    hi: usize,
}

impl<T: Scalar> PairKey<T> {
    fn new(cost: T, a: usize, b: usize) -> Self {
        Self {
            cost,
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .partial_cmp(&other.cost)
            .unwrap_or(Ordering::Equal)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Ward merge sequence over points given in leaf order.
pub fn ward_linkage<T: Scalar>(points: &[Vec<T>]) -> Result<Vec<Merge<T>>, ClusterError> {
    let n = points.len();
    if n < 2 {
        return Err(ClusterError::TooFew(n));
    }
    let d = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(ClusterError::Ragged);
        }
        if !crate::scalar::all_finite(p) {
            return Err(ClusterError::NonFinite(i));
        }
    }

    let half = T::lit(0.5);
    let data: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let pi = &points[i];
            ((i + 1)..n).map(move |j| half * crate::scalar::squared_distance(pi, &points[j]))
        })
        .collect();
    let mut dist = Condensed { n, data };

    let mut active = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut nn: Vec<Option<(usize, PairKey<T>)>> = vec![None; n];

    let best_in_row = |i: usize, dist: &Condensed<T>, active: &[bool], node: &[usize]| {
        let mut best: Option<(usize, PairKey<T>)> = None;
        for j in (i + 1)..n {
            if !active[j] {
                continue;
            }
            let key = PairKey::new(dist.get(i, j), node[i], node[j]);
            if best.as_ref().is_none_or(|(_, b)| key.cmp(b) == Ordering::Less) {
                best = Some((j, key));
            }
        }
        best
    };

    for (i, slot) in nn.iter_mut().enumerate() {
        *slot = best_in_row(i, &dist, &active, &node);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..(n - 1) {
        let (a, (b, key)) = (0..n)
            .filter(|&i| active[i])
            .filter_map(|i| nn[i].map(|x| (i, x)))
            .min_by(|x, y| x.1 .1.cmp(&y.1 .1))
            .expect("at least two active clusters");

        let (na, nb) = (T::from_usize_lossy(size[a]), T::from_usize_lossy(size[b]));
        let dab = key.cost;
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = T::from_usize_lossy(size[k]);
            let updated = ((na + nk) * dist.get(a, k) + (nb + nk) * dist.get(b, k) - nk * dab) / (na + nb + nk);
            dist.set(a, k, updated);
        }

        merges.push(Merge {
            left: key.lo,
            right: key.hi,
            distance: dab,
            size: size[a] + size[b],
        });
        active[b] = false;
        nn[b] = None;
        size[a] += size[b];
        node[a] = n + step;

        nn[a] = best_in_row(a, &dist, &active, &node);
        for i in 0..n {
            if !active[i] || i == a {
                continue;
            }
            match nn[i] {
                Some((j, _)) if j == a || j == b => nn[i] = best_in_row(i, &dist, &active, &node),
                Some((_, current)) if i < a => {
                    let candidate = PairKey::new(dist.get(i, a), node[i], node[a]);
                    if candidate.cmp(&current) == Ordering::Less {
                        nn[i] = Some((a, candidate));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(merges)
}

/// Ward clustering of region embeddings; leaves are ordered by cell address.
pub fn agglomerative_ward<T: Scalar>(
    embeddings: &BTreeMap<CellId, RegionEmbedding<T>>,
) -> Result<Dendrogram<T>, ClusterError> {
    let leaves: Vec<CellId> = embeddings.keys().copied().collect();
    let points: Vec<Vec<T>> = embeddings.values().map(|r| r.values.clone()).collect();
    let merges = ward_linkage(&points)?;
    Ok(Dendrogram { leaves, merges })
}

/// Flat labeling with cluster 0 the largest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterCut {
    pub k: usize,
    pub labels: BTreeMap<CellId, usize>,
}

impl ClusterCut {
    pub fn members(&self, cluster: usize) -> BTreeSet<CellId> {
        self.labels.iter().filter(|(_, &l)| l == cluster).map(|(&c, _)| c).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in self.labels.values() {
            sizes[l] += 1;
        }
        sizes
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Undoes the last `k - 1` merges and numbers clusters by descending size,
/// ties by smallest member address.
pub fn cut_tree<T: Scalar>(d: &Dendrogram<T>, k: usize) -> Result<ClusterCut, ClusterError> {
    let n = d.leaves.len();
    if k < 1 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let mut parent: Vec<usize> = (0..(2 * n - 1)).collect();
    for (step, m) in d.merges.iter().take(n - k).enumerate() {
        let new = n + step;
        parent[m.left] = new;
        parent[m.right] = new;
    }
    let mut groups: BTreeMap<usize, Vec<CellId>> = BTreeMap::new();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        groups.entry(root).or_default().push(d.leaves[leaf]);
    }
    let mut clusters: Vec<Vec<CellId>> = groups.into_values().collect();
    for c in &mut clusters {
        c.sort();
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    let labels = clusters
        .iter()
        .enumerate()
        .flat_map(|(id, cells)| cells.iter().map(move |&c| (c, id)))
        .collect();
    Ok(ClusterCut { k, labels })
}

/// Feature-share profile change when one cluster splits in two.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDifference {
    /// Cluster of the coarser cut that was split.
    pub parent: usize,
    /// Smaller child in the finer cut.
    pub new_cluster: usize,
    pub old_cluster: usize,
    /// `share(new) - share(old)` per column.
    pub per_column: Vec<f64>,
    /// Same, with shares normalized within each key's columns.
    pub per_key: Vec<f64>,
}

fn normalize_per_key(shares: &[f64], keys: &[Range<usize>]) -> Vec<f64> {
    let mut out = shares.to_vec();
    for r in keys {
        let total: f64 = shares[r.clone()].iter().sum();
        for v in &mut out[r.clone()] {
            *v = if total > 0.0 { *v / total } else { 0.0 };
        }
    }
    out
}

/// Locates the single split between consecutive cuts and profiles it.
pub fn split_difference(
    coarse: &ClusterCut,
    fine: &ClusterCut,
    assignment: &CellAssignment,
    features: &BTreeMap<String, Vec<u8>>,
    key_columns: &[Range<usize>],
    mode: ShareMode,
) -> Result<SplitDifference, ClusterError> {
    if fine.k != coarse.k + 1 {
        return Err(ClusterError::NotNested(format!("k {} then {}", coarse.k, fine.k)));
    }
    if coarse.labels.len() != fine.labels.len() || coarse.labels.keys().ne(fine.labels.keys()) {
        return Err(ClusterError::NotNested("different region sets".into()));
    }
    let mut parent_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (cell, &f) in &fine.labels {
        let c = coarse.labels[cell];
        if *parent_of.entry(f).or_insert(c) != c {
            return Err(ClusterError::NotNested(format!("fine cluster {f} spans several coarse clusters")));
        }
    }
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&f, &c) in &parent_of {
        children.entry(c).or_default().push(f);
    }
    let split: Vec<(usize, Vec<usize>)> = children.into_iter().filter(|(_, ch)| ch.len() > 1).collect();
    let [(parent, kids)] = split.as_slice() else {
        return Err(ClusterError::NotNested("expected exactly one split cluster".into()));
    };
    let [x, y] = kids.as_slice() else {
        return Err(ClusterError::NotNested("split into more than two clusters".into()));
    };
    let (mx, my) = (fine.members(*x), fine.members(*y));
    let x_is_new = match mx.len().cmp(&my.len()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => mx.first() < my.first(),
    };
    let (new_cluster, old_cluster, new_set, old_set) = if x_is_new { (*x, *y, mx, my) } else { (*y, *x, my, mx) };

    let s_new = region_feature_share(assignment, features, &new_set, mode)?;
    let s_old = region_feature_share(assignment, features, &old_set, mode)?;
    let per_column = s_new.iter().zip(&s_old).map(|(a, b)| a - b).collect();
    let per_key = normalize_per_key(&s_new, key_columns)
        .iter()
        .zip(normalize_per_key(&s_old, key_columns))
        .map(|(a, b)| a - b)
        .collect();
    Ok(SplitDifference {
        parent: *parent,
        new_cluster,
        old_cluster,
        per_column,
        per_key,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cell_of_point;

    fn cells(n: usize) -> Vec<CellId> {
        let mut out = vec![cell_of_point(16.9252, 52.4064, 9).unwrap()];
        while out.len() < n {
            let next = out
                .iter()
                .flat_map(|c| c.neighbors())
                .filter(|c| !out.contains(c))
                .min()
                .unwrap();
            out.push(next);
        }
        out.sort();
        out
    }

    fn regions(points: &[Vec<f64>]) -> BTreeMap<CellId, RegionEmbedding<f64>> {
        cells(points.len())
            .into_iter()
            .zip(points)
            .map(|(c, p)| {
                (
                    c,
                    RegionEmbedding {
                        cell: c,
                        values: p.clone(),
                        segment_count: 1,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn two_points_half_squared_distance() {
        let m = ward_linkage(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m, vec![Merge { left: 0, right: 1, distance: 12.5, size: 2 }]);
    }

    #[test]
    fn collinear_zero_one_ten() {
        let m = ward_linkage(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        assert_eq!((m[0].left, m[0].right, m[0].distance), (0, 1, 0.5));
        // {0,1} centroid 0.5 vs 10: 2*1/3 * 9.5^2
        assert_eq!((m[1].left, m[1].right, m[1].size), (2, 3, 3));
        assert!((m[1].distance - 2.0f64 / 3.0 * 90.25).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_smallest_pair() {
        let m = ward_linkage(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!((m[0].left, m[0].right), (0, 1));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(ward_linkage::<f64>(&[vec![1.0]]), Err(ClusterError::TooFew(1)));
        assert_eq!(ward_linkage(&[vec![1.0], vec![f64::NAN]]), Err(ClusterError::NonFinite(1)));
    }

    #[test]
    fn cut_extremes_and_labels() {
        let pts = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.2], vec![5.1]];
        let d = agglomerative_ward(&regions(&pts)).unwrap();
        let one = cut_tree(&d, 1).unwrap();
        assert!(one.labels.values().all(|&l| l == 0));
        let all = cut_tree(&d, 5).unwrap();
        assert_eq!(all.sizes(), vec![1; 5]);
        let two = cut_tree(&d, 2).unwrap();
        assert_eq!(two.sizes(), vec![3, 2]);
        let leaves = &d.leaves;
        assert_eq!(two.labels[&leaves[0]], 1);
        assert_eq!(two.labels[&leaves[2]], 0);
        assert!(matches!(cut_tree(&d, 0), Err(ClusterError::BadK { .. })));
        assert!(matches!(cut_tree(&d, 6), Err(ClusterError::BadK { .. })));
    }

    #[test]
    fn split_with_constant_columns() {
        let pts = vec![vec![0.0], vec![0.1], vec![0.2], vec![9.0], vec![9.1]];
        let reg = regions(&pts);
        let d = agglomerative_ward(&reg).unwrap();
        let cells: Vec<CellId> = reg.keys().copied().collect();
        // each region has one segment; first three asphalt (col 0), last two unpaved (col 1)
        let asg = CellAssignment::from_segments(
            9,
            cells.iter().enumerate().map(|(i, &c)| (format!("s{i}"), vec![c])),
        )
        .unwrap();
        let features: BTreeMap<String, Vec<u8>> = (0..5)
            .map(|i| (format!("s{i}"), if i < 3 { vec![1, 0] } else { vec![0, 1] }))
            .collect();
        let c1 = cut_tree(&d, 1).unwrap();
        let c2 = cut_tree(&d, 2).unwrap();
        let diff = split_difference(&c1, &c2, &asg, &features, std::slice::from_ref(&(0..2)), ShareMode::Membership).unwrap();
        assert_eq!(diff.parent, 0);
        assert_eq!(diff.new_cluster, 1);
        assert_eq!(diff.per_column, vec![-1.0, 1.0]);
        assert_eq!(diff.per_key, vec![-1.0, 1.0]);

        let c3 = cut_tree(&d, 3).unwrap();
        assert!(matches!(
            split_difference(&c1, &c3, &asg, &features, std::slice::from_ref(&(0..2)), ShareMode::Membership),
            Err(ClusterError::NotNested(_))
        ));
    }
}
