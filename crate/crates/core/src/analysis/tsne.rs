//! Exact t-SNE with per-point bandwidth calibration.
//!
//! Input affinities use Gaussian kernels whose precisions are found by
//! bisection so every conditional distribution reaches the target
//! perplexity; output affinities use the Student-t kernel. The KL divergence
//! is minimized by gradient descent with momentum, per-parameter gains and
//! early exaggeration. All pair sums run sequentially in index order, so the
//! result is bit-for-bit reproducible for a given seed.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{from_matrix, to_matrix, AnalysisError, Method, Projection};
use crate::aggregate::RegionEmbedding;
use crate::grid::CellId;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_std: f64,
    /// Allowed |achieved - target| perplexity.
    pub perplexity_tolerance: f64,
    pub max_search_steps: usize,
    /// KL divergence is recorded every this many iterations.
    pub kl_every: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 100.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_std: 1e-4,
            perplexity_tolerance: 1e-5,
            max_search_steps: 50,
            kl_every: 50,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult<T> {
    /// `n x 2` output coordinates.
    pub coords: Array2<T>,
    /// Target after clamping for small inputs.
    pub perplexity: f64,
    /// Gaussian precision of each point's conditional distribution.
    pub betas: Vec<T>,
    pub achieved_perplexity: Vec<f64>,
    /// `(iteration, KL(P || Q))` checkpoints, with unexaggerated `P`.
    pub kl_history: Vec<(usize, T)>,
    pub jittered: bool,
}

impl<T: Scalar> TsneResult<T> {
    pub fn kl_at(&self, iteration: usize) -> Option<T> {
        self.kl_history.iter().find(|(i, _)| *i == iteration).map(|&(_, kl)| kl)
    }
}

fn pairwise_sq<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = crate::scalar::squared_distance(
                x.row(i).as_slice().expect("standard layout"),
                x.row(j).as_slice().expect("standard layout"),
            );
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Conditional row `p_{j|i}` for precision `beta`, plus its entropy (nats).
pub fn conditional_row<T: Scalar>(dist_row: &[T], i: usize, beta: T, out: &mut [T]) -> T {
    let dmin = dist_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold(T::infinity(), |m, (_, &d)| m.min(d));
    let mut z = T::zero();
    let mut weighted = T::zero();
    for (j, (&d, o)) in dist_row.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = T::zero();
            continue;
        }
        let shifted = d - dmin;
        let w = (-beta * shifted).exp();
        *o = w;
        z += w;
        weighted += w * shifted;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    z.ln() + beta * weighted / z
}

/// Finds each row's precision by bisection on the entropy.
fn calibrate<T: Scalar>(dist: &Array2<T>, perplexity: f64, cfg: &TsneConfig) -> (Array2<T>, Vec<T>, Vec<f64>) {
    let n = dist.nrows();
    let mut p = Array2::zeros((n, n));
    let mut betas = Vec::with_capacity(n);
    let mut achieved = Vec::with_capacity(n);
    let target = T::lit(perplexity);
    let tol = T::lit(cfg.perplexity_tolerance);
    let two = T::lit(2.0);
    for i in 0..n {
        let row = dist.row(i).to_vec();
        let mean_gap = {
            let dmin = row.iter().enumerate().filter(|&(j, _)| j != i).fold(T::infinity(), |m, (_, &d)| m.min(d));
            let s: T = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d - dmin).sum();
            s / T::from_usize_lossy(n - 1)
        };
        let mut beta = if mean_gap > T::zero() { T::one() / mean_gap } else { T::one() };
        let (mut lo, mut hi) = (T::zero(), T::infinity());
        let mut out = vec![T::zero(); n];
        for _ in 0..cfg.max_search_steps {
            let perp = conditional_row(&row, i, beta, &mut out).exp();
            if (perp - target).abs() < tol {
                break;
            }
            if perp > target {
                lo = beta;
                beta = if hi.is_infinite() { beta * two } else { (beta + hi) / two };
            } else {
                hi = beta;
                beta = (beta + lo) / two;
            }
        }
        // the loop may exit right after moving beta
        let h = conditional_row(&row, i, beta, &mut out);
        achieved.push(h.exp().as_f64());
        betas.push(beta);
        for (j, v) in out.into_iter().enumerate() {
            p[[i, j]] = v;
        }
    }
    (p, betas, achieved)
}

fn kl_divergence<T: Scalar>(p: &Array2<T>, y: &Array2<T>) -> T {
    let n = y.nrows();
    let mut z = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq2(y, i, j);
            z += T::lit(2.0) / (T::one() + d);
        }
    }
    let tiny = T::lit(1e-12);
    let mut kl = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[[i, j]];
            if pij > T::zero() {
                let q = (T::one() / (T::one() + sq2(y, i, j)) / z).max(tiny);
                kl += pij * (pij.max(tiny) / q).ln();
            }
        }
    }
    kl
}

#[inline]
fn sq2<T: Scalar>(y: &Array2<T>, i: usize, j: usize) -> T {
    let dx = y[[i, 0]] - y[[j, 0]];
    let dy = y[[i, 1]] - y[[j, 1]];
    dx * dx + dy * dy
}

/// Exact t-SNE of the rows of `data` into 2 dimensions.
pub fn tsne<T: Scalar>(data: ArrayView2<T>, cfg: &TsneConfig) -> Result<TsneResult<T>, AnalysisError> {
    let n = data.nrows();
    if n < 4 {
        return Err(AnalysisError::TooFew { needed: 4, found: n });
    }
    if let Some(bad) = data.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(AnalysisError::NonFinite(bad));
    }
    let mut perplexity = cfg.perplexity;
    if (n as f64) <= 3.0 * perplexity {
        perplexity = (n as f64 - 1.0) / 3.0;
        log::warn!("t-SNE perplexity {} too large for {n} points, using {perplexity:.3}", cfg.perplexity);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = data.as_standard_layout().to_owned();
    let mut dist = pairwise_sq(&x);
    let has_duplicates = (0..n).any(|i| ((i + 1)..n).any(|j| dist[[i, j]] == T::zero()));
    if has_duplicates {
        let jitter = Normal::new(0.0, 1e-10).expect("valid normal");
        x.mapv_inplace(|v| v + T::lit(jitter.sample(&mut rng)));
        dist = pairwise_sq(&x);
    }

    let (cond, betas, achieved) = calibrate(&dist, perplexity, cfg);
    drop(dist);
    let mut p = Array2::zeros((n, n));
    let norm = T::lit(2.0 * n as f64);
    let floor = T::lit(1e-12);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = ((cond[[i, j]] + cond[[j, i]]) / norm).max(floor);
            }
        }
    }
    drop(cond);

    let init = Normal::new(0.0, cfg.init_std).expect("valid normal");
    let mut y = Array2::from_shape_simple_fn((n, 2), || T::lit(init.sample(&mut rng)));
    let mut update = Array2::<T>::zeros((n, 2));
    let mut gains = Array2::<T>::ones((n, 2));
    let mut attract = Array2::<T>::zeros((n, 2));
    let mut repulse = Array2::<T>::zeros((n, 2));
    let lr = T::lit(cfg.learning_rate);
    let four = T::lit(4.0);
    let min_gain = T::lit(0.01);
    let mut kl_history = Vec::new();

    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iterations {
            T::lit(cfg.early_exaggeration)
        } else {
            T::one()
        };
        let momentum = T::lit(if iter < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        });

        attract.fill(T::zero());
        repulse.fill(T::zero());
        let mut half_z = T::zero();
        {
            let ys = y.as_slice().expect("standard layout");
            let ps = p.as_slice().expect("standard layout");
            let att = attract.as_slice_mut().expect("standard layout");
            let rep = repulse.as_slice_mut().expect("standard layout");
            for i in 0..n {
                let (yi0, yi1) = (ys[2 * i], ys[2 * i + 1]);
                let (mut a0, mut a1, mut r0, mut r1) = (T::zero(), T::zero(), T::zero(), T::zero());
                let rest = 2 * (i + 1);
                let (att_i, att_rest) = att.split_at_mut(rest);
                let (rep_i, rep_rest) = rep.split_at_mut(rest);
                let pairs = ys[rest..]
                    .chunks_exact(2)
                    .zip(&ps[i * n + i + 1..(i + 1) * n])
                    .zip(att_rest.chunks_exact_mut(2).zip(rep_rest.chunks_exact_mut(2)));
                for ((yj, &pij), (aj, rj)) in pairs {
                    let dx = yi0 - yj[0];
                    let dy = yi1 - yj[1];
                    let num = T::one() / (T::one() + dx * dx + dy * dy);
                    half_z += num;
                    let a = pij * num;
                    let r = num * num;
                    a0 += a * dx;
                    a1 += a * dy;
                    r0 += r * dx;
                    r1 += r * dy;
                    aj[0] -= a * dx;
                    aj[1] -= a * dy;
                    rj[0] -= r * dx;
                    rj[1] -= r * dy;
                }
                att_i[2 * i] += a0;
                att_i[2 * i + 1] += a1;
                rep_i[2 * i] += r0;
                rep_i[2 * i + 1] += r1;
            }
        }
        let z = half_z + half_z;

        for i in 0..n {
            for a in 0..2 {
                let grad = four * (exaggeration * attract[[i, a]] - repulse[[i, a]] / z);
                let g = &mut gains[[i, a]];
                let u = &mut update[[i, a]];
                *g = if (grad > T::zero()) != (*u > T::zero()) {
                    *g + T::lit(0.2)
                } else {
                    *g * T::lit(0.8)
                };
                if *g < min_gain {
                    *g = min_gain;
                }
                *u = momentum * *u - lr * *g * grad;
                y[[i, a]] += *u;
            }
        }
        let mean: Array1<T> = y.mean_axis(ndarray::Axis(0)).expect("non-empty");
        y -= &mean;

        let done = iter + 1;
        if (cfg.kl_every > 0 && done % cfg.kl_every == 0) || done == cfg.iterations {
            kl_history.push((done, kl_divergence(&p, &y)));
        }
    }

    Ok(TsneResult {
        coords: y,
        perplexity,
        betas,
        achieved_perplexity: achieved,
        kl_history,
        jittered: has_duplicates,
    })
}

/// t-SNE projection of region embeddings.
pub fn tsne_project<T: Scalar>(
    embeddings: &BTreeMap<CellId, RegionEmbedding<T>>,
    cfg: &TsneConfig,
) -> Result<(Projection<T>, TsneResult<T>), AnalysisError> {
    let (cells, data) = to_matrix(embeddings)?;
    let result = tsne(data.view(), cfg)?;
    let projection = Projection {
        dims: 2,
        method: Method::Tsne,
        coords: from_matrix(&cells, &result.coords),
        params: BTreeMap::from([
            ("perplexity".to_string(), result.perplexity),
            ("iterations".to_string(), cfg.iterations as f64),
            ("seed".to_string(), cfg.seed as f64),
        ]),
    };
    Ok((projection, result))
}
