//! Brute-force reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the numerical code under
//! test beyond plain data accessors and `cell_of_point`.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hexembed::autoencoder::ModelParams;
use hexembed::grid::{cell_of_point, CellId};
use hexembed::ingest::{haversine_m, RoadNetwork};
use rand::Rng;
use serde::Deserialize;

// ---------------------------------------------------------------- hex grid

#[derive(Debug, Deserialize)]
pub struct ReferencePoint {
    pub lng: f64,
    pub lat: f64,
    pub res: u8,
    pub cell: String,
}

#[derive(Debug, Deserialize)]
pub struct ReferenceSet {
    pub h3_version: String,
    pub points: Vec<ReferencePoint>,
}

/// Frozen output of the reference C implementation (see `data/gen_h3_reference.py`).
pub fn h3_reference() -> ReferenceSet {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/h3_reference.json");
    let text = std::fs::read_to_string(path).expect("reference fixture present");
    serde_json::from_str(&text).expect("reference fixture parses")
}

/// Cells hit by sampling every chord of `points` at spacing of at most 1 m.
pub fn dense_cells(points: &[(f64, f64)], res: u8) -> BTreeSet<CellId> {
    let mut out = BTreeSet::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = (haversine_m(a, b).ceil() as usize).max(1);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            out.insert(cell_of_point(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t, res).unwrap());
        }
    }
    out
}

/// Random two-point segment of 5..800 m at mid latitudes.
pub fn random_segment(rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let lat: f64 = rng.random_range(-60.0..60.0);
    let lon: f64 = rng.random_range(-179.0..179.0);
    let len_m: f64 = rng.random_range(5.0..800.0);
    let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let dlat = len_m * heading.cos() / 111_195.0;
    let dlon = len_m * heading.sin() / (111_195.0 * lat.to_radians().cos());
    vec![(lon, lat), (lon + dlon, lat + dlat)]
}

// ------------------------------------------------------------- autoencoder

fn dense(x: &[f64], w: &ndarray::Array2<f64>, b: &ndarray::Array1<f64>, relu: bool) -> Vec<f64> {
    (0..w.ncols())
        .map(|j| {
            let mut s = b[j];
            for (i, xi) in x.iter().enumerate() {
                s += xi * w[[i, j]];
            }
            if relu && s < 0.0 {
                0.0
            } else {
                s
            }
        })
        .collect()
}

/// Scalar-loop forward pass: (latent, reconstruction).
pub fn naive_forward(p: &ModelParams<f64>, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = dense(x, &p.enc1.weights, &p.enc1.bias, true);
    let z = dense(&h, &p.enc2.weights, &p.enc2.bias, false);
    let g = dense(&z, &p.dec1.weights, &p.dec1.bias, true);
    let out = dense(&g, &p.dec2.weights, &p.dec2.bias, false);
    (z, out)
}

/// Mean squared error over all elements of all rows, two nested loops.
pub fn naive_mse(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (r, s) in x.iter().zip(y) {
        for (a, b) in r.iter().zip(s) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    sum / count as f64
}

pub fn naive_loss(p: &ModelParams<f64>, rows: &[Vec<f64>]) -> f64 {
    let recon: Vec<Vec<f64>> = rows.iter().map(|r| naive_forward(p, r).1).collect();
    naive_mse(rows, &recon)
}

/// Central differences of the naive loss for every flat parameter.
pub fn finite_difference(p: &ModelParams<f64>, rows: &[Vec<f64>], eps: f64) -> Vec<f64> {
    let n = p.parameter_count();
    let mut q = p.clone();
    (0..n)
        .map(|i| {
            let orig = *q.flat_mut(i);
            *q.flat_mut(i) = orig + eps;
            let up = naive_loss(&q, rows);
            *q.flat_mut(i) = orig - eps;
            let down = naive_loss(&q, rows);
            *q.flat_mut(i) = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Relative error with an absolute floor for entries near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

// ------------------------------------------------------------------ ward

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveMerge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Ward merges recomputed from centroids of explicit member lists at every step.
pub fn naive_ward(points: &[Vec<f64>]) -> Vec<NaiveMerge> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| {
        let d = points[0].len();
        let mut c = vec![0.0; d];
        for &m in members {
            for k in 0..d {
                c[k] += points[m][k];
            }
        }
        c.iter_mut().for_each(|v| *v /= members.len() as f64);
        c
    };
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in (x + 1)..clusters.len() {
                let (na, nb) = (clusters[x].1.len() as f64, clusters[y].1.len() as f64);
                let (ca, cb) = (centroid(&clusters[x].1), centroid(&clusters[y].1));
                let d2: f64 = ca.iter().zip(&cb).map(|(a, b)| (a - b) * (a - b)).sum();
                let cost = na * nb / (na + nb) * d2;
                let (lo, hi) = {
                    let (a, b) = (clusters[x].0, clusters[y].0);
                    (a.min(b), a.max(b))
                };
                let better = match best {
                    None => true,
                    Some((bc, blo, bhi, _, _)) => cost < bc || (cost == bc && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((cost, lo, hi, x, y));
                }
            }
        }
        let (cost, lo, hi, x, y) = best.unwrap();
        let mut members = clusters[x].1.clone();
        members.extend(&clusters[y].1);
        clusters.remove(y);
        clusters.remove(x);
        merges.push(NaiveMerge {
            left: lo,
            right: hi,
            distance: cost,
            size: members.len(),
        });
        clusters.push((n + step, members));
    }
    merges
}

// ------------------------------------------------------------- aggregation

/// Per-cell mean rebuilt from scratch: for every cell, scan all segments.
pub fn naive_region_means(
    segment_cells: &BTreeMap<String, Vec<CellId>>,
    embeddings: &BTreeMap<String, Vec<f64>>,
) -> BTreeMap<CellId, Vec<f64>> {
    let cells: BTreeSet<CellId> = segment_cells.values().flatten().copied().collect();
    let mut out = BTreeMap::new();
    for cell in cells {
        let mut sum: Vec<f64> = Vec::new();
        let mut count = 0;
        for (id, cs) in segment_cells {
            if cs.contains(&cell) {
                let e = &embeddings[id];
                if sum.is_empty() {
                    sum = vec![0.0; e.len()];
                }
                for (s, v) in sum.iter_mut().zip(e) {
                    *s += v;
                }
                count += 1;
            }
        }
        out.insert(cell, sum.into_iter().map(|s| s / count as f64).collect());
    }
    out
}

/// Share of each column over all (segment, region) memberships in `regions`.
pub fn naive_shares(
    segment_cells: &BTreeMap<String, Vec<CellId>>,
    features: &BTreeMap<String, Vec<u8>>,
    regions: &BTreeSet<CellId>,
) -> Vec<f64> {
    let width = features.values().next().map_or(0, Vec::len);
    let mut counts = vec![0.0; width];
    let mut total = 0.0;
    for (id, cs) in segment_cells {
        for c in cs {
            if regions.contains(c) {
                total += 1.0;
                for (k, &b) in features[id].iter().enumerate() {
                    counts[k] += f64::from(b);
                }
            }
        }
    }
    counts.into_iter().map(|c| c / total).collect()
}

/// Raw tag scan of a network: share of segments carrying each key.
pub fn naive_key_presence(net: &RoadNetwork, key: &str) -> f64 {
    let hits = net.segments().iter().filter(|s| s.tags.contains_key(key)).count();
    hits as f64 / net.len() as f64
}

// ------------------------------------------------------------ neighbours

pub fn naive_nearest(query: &[f64], candidates: &BTreeMap<CellId, Vec<f64>>) -> Vec<(CellId, f64)> {
    let mut all: Vec<(CellId, f64)> = candidates
        .iter()
        .map(|(&c, v)| (c, v.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all
}

// -------------------------------------------------------------- clusters

/// Lloyd's 2-means in plain loops, seeded by the two mutually farthest points.
pub fn two_means(points: &[Vec<f64>]) -> Vec<usize> {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let far = |from: &[f64]| {
        (0..points.len())
            .max_by(|&i, &j| d2(&points[i], from).total_cmp(&d2(&points[j], from)))
            .unwrap()
    };
    let a = far(&points[0]);
    let b = far(&points[a]);
    let mut centers = [points[a].clone(), points[b].clone()];
    let mut labels = vec![0; points.len()];
    for _ in 0..100 {
        for (l, p) in labels.iter_mut().zip(points) {
            *l = usize::from(d2(p, &centers[1]) < d2(p, &centers[0]));
        }
        for (k, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
            for (j, c) in center.iter_mut().enumerate() {
                *c = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    labels
}
