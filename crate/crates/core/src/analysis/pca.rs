//! Principal component projection and the PCA-to-RGB colouring.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{from_matrix, to_matrix, AnalysisError, Method, Projection};
use crate::aggregate::RegionEmbedding;
use crate::grid::CellId;
use crate::linalg::symmetric_eigen;
use crate::Scalar;

/// Fitted principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    pub mean: Array1<T>,
    /// One unit-length component per row, sorted by explained variance.
    pub components: Array2<T>,
    pub explained_variance: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
    /// Number of eigenvalues above the numerical noise floor.
    pub rank: usize,
}

impl<T: Scalar> Pca<T> {
    /// Fits `dims` components to the rows of `data`.
    pub fn fit(data: ArrayView2<T>, dims: usize) -> Result<Self, AnalysisError> {
        let (n, d) = data.dim();
        if n < dims + 1 {
            return Err(AnalysisError::TooFew { needed: dims + 1, found: n });
        }
        if let Some(bad) = data.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(AnalysisError::NonFinite(bad));
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let centered = &data - &mean;
        let cov = centered.t().dot(&centered) / T::from_usize_lossy(n - 1);
        let (values, vectors) = symmetric_eigen(&cov);

        let values: Vec<T> = values.iter().map(|&v| v.max(T::zero())).collect();
        let top = values.first().copied().unwrap_or_else(T::zero);
        let floor = top * T::epsilon().sqrt() * T::from_usize_lossy(d.max(1));
        let rank = values.iter().filter(|&&v| v > floor).count();
        if rank < dims {
            return Err(AnalysisError::Rank { rank, dims });
        }
        let total: T = values.iter().copied().sum();

        let mut components = Array2::zeros((dims, d));
        for k in 0..dims {
            let mut col = vectors.column(k).to_owned();
            let pivot = col
                .iter()
                .enumerate()
                .fold((0, T::zero()), |best, (i, &v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
                .0;
            if col[pivot] < T::zero() {
                col.mapv_inplace(|v| -v);
            }
            components.row_mut(k).assign(&col);
        }
        Ok(Self {
            mean,
            components,
            explained_variance: values[..dims].to_vec(),
            explained_variance_ratio: values[..dims].iter().map(|&v| v / total).collect(),
            rank,
        })
    }

    pub fn transform(&self, data: ArrayView2<T>) -> Array2<T> {
        (&data - &self.mean).dot(&self.components.t())
    }

    pub fn reconstruct(&self, coords: ArrayView2<T>) -> Array2<T> {
        coords.dot(&self.components) + &self.mean
    }
}

/// PCA projection of region embeddings to 2 or 3 dimensions.
pub fn pca_project<T: Scalar>(
    embeddings: &BTreeMap<CellId, RegionEmbedding<T>>,
    dims: usize,
) -> Result<(Projection<T>, Pca<T>), AnalysisError> {
    if !(2..=3).contains(&dims) {
        return Err(AnalysisError::Dims(dims));
    }
    let (cells, data) = to_matrix(embeddings)?;
    let pca = Pca::fit(data.view(), dims)?;
    let coords = pca.transform(data.view());
    let projection = Projection {
        dims,
        method: Method::Pca,
        coords: from_matrix(&cells, &coords),
        params: BTreeMap::new(),
    };
    Ok((projection, pca))
}

/// Per-axis min-max scaling of a 3-d projection to 0..=255, rounding half up.
/// An axis with no spread maps to 128.
pub fn rgb_encode<T: Scalar>(projection: &Projection<T>) -> Result<BTreeMap<CellId, [u8; 3]>, AnalysisError> {
    if projection.dims != 3 {
        return Err(AnalysisError::Dims(projection.dims));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in projection.coords.values() {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a].as_f64());
            hi[a] = hi[a].max(v[a].as_f64());
        }
    }
    Ok(projection
        .coords
        .iter()
        .map(|(&cell, v)| {
            let mut rgb = [128u8; 3];
            for a in 0..3 {
                if hi[a] > lo[a] {
                    let scaled = (v[a].as_f64() - lo[a]) / (hi[a] - lo[a]) * 255.0;
                    rgb[a] = (scaled + 0.5).floor().clamp(0.0, 255.0) as u8;
                }
            }
            (cell, rgb)
        })
        .collect())
}
