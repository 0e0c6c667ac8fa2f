//! Segment embeddings to region embeddings, and feature shares over regions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellAssignment, CellId};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("segment `{0}` is assigned to a cell but has no embedding")]
    MissingEmbedding(String),
    #[error("segment `{0}` has no feature row")]
    MissingFeatures(String),
    #[error("segment `{0}` has no weight")]
    MissingWeight(String),
    #[error("embedding of segment `{id}` has length {found}, expected {expected}")]
    Length { id: String, found: usize, expected: usize },
    #[error("region set has no member segments")]
    EmptyMembership,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionEmbedding<T> {
    pub cell: CellId,
    pub values: Vec<T>,
    pub segment_count: usize,
}

fn lookup<'a, T>(embeddings: &'a BTreeMap<String, Vec<T>>, id: &str, dim: &mut Option<usize>) -> Result<&'a [T], AggregateError> {
    let e = embeddings
        .get(id)
        .ok_or_else(|| AggregateError::MissingEmbedding(id.to_string()))?;
    match *dim {
        Some(d) if d != e.len() => Err(AggregateError::Length {
            id: id.to_string(),
            found: e.len(),
            expected: d,
        }),
        _ => {
            *dim = Some(e.len());
            Ok(e)
        }
    }
}

/// Arithmetic mean of member segment embeddings for every assigned cell.
///
/// Members are summed in sorted id order, so the result does not depend on
/// the order segments were ingested.
pub fn aggregate_mean<T: Scalar>(
    assignment: &CellAssignment,
    embeddings: &BTreeMap<String, Vec<T>>,
) -> Result<BTreeMap<CellId, RegionEmbedding<T>>, AggregateError> {
    aggregate(assignment, embeddings, None)
}

/// Weighted mean, e.g. with segment lengths as weights.
pub fn aggregate_weighted<T: Scalar>(
    assignment: &CellAssignment,
    embeddings: &BTreeMap<String, Vec<T>>,
    weights: &BTreeMap<String, T>,
) -> Result<BTreeMap<CellId, RegionEmbedding<T>>, AggregateError> {
    aggregate(assignment, embeddings, Some(weights))
}

fn aggregate<T: Scalar>(
    assignment: &CellAssignment,
    embeddings: &BTreeMap<String, Vec<T>>,
    weights: Option<&BTreeMap<String, T>>,
) -> Result<BTreeMap<CellId, RegionEmbedding<T>>, AggregateError> {
    let mut dim = None;
    let mut out = BTreeMap::new();
    for (&cell, members) in assignment.cell_to_segments() {
        let mut sum: Vec<T> = Vec::new();
        let mut total = T::zero();
        for id in members {
            let e = lookup(embeddings, id, &mut dim)?;
            let w = match weights {
                Some(ws) => *ws.get(id).ok_or_else(|| AggregateError::MissingWeight(id.clone()))?,
                None => T::one(),
            };
            if sum.is_empty() {
                sum = vec![T::zero(); e.len()];
            }
            for (s, &v) in sum.iter_mut().zip(e) {
                *s += w * v;
            }
            total += w;
        }
        let values = sum.into_iter().map(|s| s / total).collect();
        out.insert(
            cell,
            RegionEmbedding {
                cell,
                values,
                segment_count: members.len(),
            },
        );
    }
    Ok(out)
}

/// How a segment spanning several regions of a set is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShareMode {
    /// Once per region membership.
    #[default]
    Membership,
    /// Once per distinct segment.
    Unique,
}

/// Per-column share of set bits over the segments of a region set.
pub fn region_feature_share(
    assignment: &CellAssignment,
    features: &BTreeMap<String, Vec<u8>>,
    regions: &BTreeSet<CellId>,
    mode: ShareMode,
) -> Result<Vec<f64>, AggregateError> {
    let members: Vec<&String> = match mode {
        ShareMode::Membership => regions.iter().flat_map(|&c| assignment.segments_in(c)).collect(),
        ShareMode::Unique => regions
            .iter()
            .flat_map(|&c| assignment.segments_in(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if members.is_empty() {
        return Err(AggregateError::EmptyMembership);
    }
    let mut counts: Vec<u64> = Vec::new();
    for id in &members {
        let row = features
            .get(id.as_str())
            .ok_or_else(|| AggregateError::MissingFeatures(id.to_string()))?;
        if counts.is_empty() {
            counts = vec![0; row.len()];
        }
        for (c, &b) in counts.iter_mut().zip(row) {
            *c += u64::from(b);
        }
    }
    let n = members.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cell_of_point;

    fn cells() -> (CellId, CellId) {
        let a = cell_of_point(16.9252, 52.4064, 9).unwrap();
        (a, a.neighbors()[0])
    }

    #[test]
    fn mean_of_one_and_of_opposites() {
        let (a, b) = cells();
        let asg = CellAssignment::from_segments(
            9,
            [("s1".to_string(), vec![a]), ("s2".to_string(), vec![b]), ("s3".to_string(), vec![b])],
        )
        .unwrap();
        let emb = BTreeMap::from([
            ("s1".to_string(), vec![1.0, 2.0]),
            ("s2".to_string(), vec![0.5, -3.0]),
            ("s3".to_string(), vec![-0.5, 3.0]),
        ]);
        let regions = aggregate_mean(&asg, &emb).unwrap();
        assert_eq!(regions[&a].values, vec![1.0, 2.0]);
        assert_eq!(regions[&a].segment_count, 1);
        assert_eq!(regions[&b].values, vec![0.0, 0.0]);
        assert_eq!(regions[&b].segment_count, 2);
    }

    #[test]
    fn missing_embedding_is_named() {
        let (a, _) = cells();
        let asg = CellAssignment::from_segments(9, [("lost".to_string(), vec![a])]).unwrap();
        assert_eq!(
            aggregate_mean::<f64>(&asg, &BTreeMap::new()),
            Err(AggregateError::MissingEmbedding("lost".into()))
        );
    }

    #[test]
    fn weighted_mean() {
        let (a, _) = cells();
        let asg = CellAssignment::from_segments(9, [("x".to_string(), vec![a]), ("y".to_string(), vec![a])]).unwrap();
        let emb = BTreeMap::from([("x".to_string(), vec![0.0]), ("y".to_string(), vec![4.0])]);
        let w = BTreeMap::from([("x".to_string(), 3.0), ("y".to_string(), 1.0)]);
        assert_eq!(aggregate_weighted(&asg, &emb, &w).unwrap()[&a].values, vec![1.0]);
    }

    #[test]
    fn shares_count_memberships() {
        let (a, b) = cells();
        let asg = CellAssignment::from_segments(
            9,
            [("s1".to_string(), vec![a, b]), ("s2".to_string(), vec![b])],
        )
        .unwrap();
        let feats = BTreeMap::from([("s1".to_string(), vec![1, 0]), ("s2".to_string(), vec![0, 1])]);
        let both = BTreeSet::from([a, b]);
        let membership = region_feature_share(&asg, &feats, &both, ShareMode::Membership).unwrap();
        assert_eq!(membership, vec![2.0 / 3.0, 1.0 / 3.0]);
        let unique = region_feature_share(&asg, &feats, &both, ShareMode::Unique).unwrap();
        assert_eq!(unique, vec![0.5, 0.5]);
        let only_a = region_feature_share(&asg, &feats, &BTreeSet::from([a]), ShareMode::Membership).unwrap();
        assert_eq!(only_a, vec![1.0, 0.0]);
        assert_eq!(
            region_feature_share(&asg, &feats, &BTreeSet::new(), ShareMode::Membership),
            Err(AggregateError::EmptyMembership)
        );
    }
}
