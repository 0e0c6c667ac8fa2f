//! Signed sums of region embeddings resolved to the nearest real region.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::aggregate::RegionEmbedding;
use crate::grid::CellId;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArithmeticQuery {
    pub terms: Vec<(Sign, CellId)>,
    /// Candidate result regions, e.g. every cell of one city.
    pub constraint: BTreeSet<CellId>,
    /// Keep operand cells among the candidates.
    pub keep_operands: bool,
    /// Divide the signed sum by the number of terms.
    pub average: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved<T> {
    pub result: CellId,
    pub distance: T,
    /// The combined query vector.
    pub vector: Vec<T>,
}

fn embedding<T>(embeddings: &BTreeMap<CellId, RegionEmbedding<T>>, cell: CellId) -> Result<&[T], AnalysisError> {
    embeddings
        .get(&cell)
        .map(|r| r.values.as_slice())
        .ok_or(AnalysisError::Missing(cell))
}

/// Combines the terms and returns the closest candidate region.
pub fn embed_arithmetic<T: Scalar>(
    query: &ArithmeticQuery,
    embeddings: &BTreeMap<CellId, RegionEmbedding<T>>,
) -> Result<Resolved<T>, AnalysisError> {
    let (_, first) = *query.terms.first().ok_or(AnalysisError::NoTerms)?;
    let dim = embedding(embeddings, first)?.len();
    let mut vector = vec![T::zero(); dim];
    for &(sign, cell) in &query.terms {
        let e = embedding(embeddings, cell)?;
        if e.len() != dim {
            return Err(AnalysisError::Ragged);
        }
        for (v, &x) in vector.iter_mut().zip(e) {
            match sign {
                Sign::Plus => *v += x,
                Sign::Minus => *v -= x,
            }
        }
    }
    if query.average {
        let n = T::from_usize_lossy(query.terms.len());
        vector.iter_mut().for_each(|v| *v /= n);
    }

    let candidates: BTreeSet<CellId> = if query.keep_operands {
        query.constraint.clone()
    } else {
        let operands: BTreeSet<CellId> = query.terms.iter().map(|&(_, c)| c).collect();
        query.constraint.difference(&operands).copied().collect()
    };
    let (ranked, _) = nearest_regions(&vector, &candidates, embeddings, 1)?;
    let (result, distance) = ranked[0];
    Ok(Resolved {
        result,
        distance,
        vector,
    })
}

/// Exact `k` nearest candidates by Euclidean distance, ties by address.
///
/// The flag is `true` when `k` exceeded the candidate count and every
/// candidate was returned.
pub fn nearest_regions<T: Scalar>(
    query: &[T],
    constraint: &BTreeSet<CellId>,
    embeddings: &BTreeMap<CellId, RegionEmbedding<T>>,
    k: usize,
) -> Result<(Vec<(CellId, T)>, bool), AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroK);
    }
    if constraint.is_empty() {
        return Err(AnalysisError::EmptyConstraint);
    }
    let mut scored = Vec::with_capacity(constraint.len());
    for &cell in constraint {
        let e = embedding(embeddings, cell)?;
        if e.len() != query.len() {
            return Err(AnalysisError::Ragged);
        }
        scored.push((cell, crate::scalar::squared_distance(query, e)));
    }
    // stable sort keeps address order among equal distances
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let truncated = k > scored.len();
    if truncated {
        log::warn!("requested {k} neighbours but only {} candidates exist", scored.len());
    }
    scored.truncate(k);
    Ok((scored.into_iter().map(|(c, d2)| (c, d2.sqrt())).collect(), truncated))
}
