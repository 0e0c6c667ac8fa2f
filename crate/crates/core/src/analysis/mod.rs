//! Latent-space inspection: projections for plotting and embedding arithmetic.

pub mod arithmetic;
pub mod pca;
pub mod tsne;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::aggregate::RegionEmbedding;
use crate::grid::CellId;
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} regions, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("data has rank {rank}, fewer than the requested {dims} components")]
    Rank { rank: usize, dims: usize },
    #[error("projection dims must be 2 or 3, got {0}")]
    Dims(usize),
    #[error("non-finite input at row {0}")]
    NonFinite(usize),
    #[error("embeddings have inconsistent lengths")]
    Ragged,
    #[error("cell {0} has no embedding")]
    Missing(CellId),
    #[error("query has no terms")]
    NoTerms,
    #[error("no candidate regions left after excluding operands")]
    EmptyConstraint,
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Tsne,
}

/// Low-dimensional coordinates for a set of regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub dims: usize,
    pub method: Method,
    pub coords: BTreeMap<CellId, Vec<T>>,
    /// Method parameters, e.g. the perplexity used.
    pub params: BTreeMap<String, f64>,
}

/// Rows in cell-address order.
pub(crate) fn to_matrix<T: Scalar>(
    embeddings: &BTreeMap<CellId, RegionEmbedding<T>>,
) -> Result<(Vec<CellId>, Array2<T>), AnalysisError> {
    let cells: Vec<CellId> = embeddings.keys().copied().collect();
    let d = embeddings.values().next().map_or(0, |r| r.values.len());
    let mut m = Array2::zeros((cells.len(), d));
    for (i, r) in embeddings.values().enumerate() {
        if r.values.len() != d {
            return Err(AnalysisError::Ragged);
        }
        if !crate::scalar::all_finite(&r.values) {
            return Err(AnalysisError::NonFinite(i));
        }
        for (j, &v) in r.values.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok((cells, m))
}

pub(crate) fn from_matrix<T: Scalar>(cells: &[CellId], m: &Array2<T>) -> BTreeMap<CellId, Vec<T>> {
    cells.iter().zip(m.rows()).map(|(&c, row)| (c, row.to_vec())).collect()
}
