mod oracles;

use std::collections::{BTreeMap, BTreeSet};

use hexembed::aggregate::{RegionEmbedding, ShareMode};
use hexembed::clustering::{agglomerative_ward, cut_tree, split_difference, ward_linkage};
use hexembed::grid::{cell_of_point, CellAssignment, CellId};
use hexembed::schema::default_schema;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect()
}

/// `n` distinct cells spiralling out from a fixed origin.
fn cells(n: usize) -> Vec<CellId> {
    let origin = cell_of_point(19.94, 50.06, 9).unwrap();
    let mut out: BTreeSet<CellId> = BTreeSet::from([origin]);
    let mut ring = vec![origin];
    while out.len() < n {
        ring = ring.iter().flat_map(|c| c.neighbors()).filter(|c| !out.contains(c)).collect();
        out.extend(ring.iter().copied());
    }
    out.into_iter().take(n).collect()
}

fn regions(cells: &[CellId], points: &[Vec<f64>]) -> BTreeMap<CellId, RegionEmbedding<f64>> {
    cells
        .iter()
        .zip(points)
        .map(|(&cell, p)| {
            (
                cell,
                RegionEmbedding {
                    cell,
                    values: p.clone(),
                    segment_count: 1,
                },
            )
        })
        .collect()
}

#[test]
fn lance_williams_matches_recompute_from_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for set in 0..25 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=10);
        let points = random_points(&mut rng, n, d);
        let fast = ward_linkage(&points).unwrap();
        let naive = oracles::naive_ward(&points);
        assert_eq!(fast.len(), naive.len());
        for (step, (f, s)) in fast.iter().zip(&naive).enumerate() {
            assert_eq!((f.left, f.right, f.size), (s.left, s.right, s.size), "set {set} step {step}");
            assert!((f.distance - s.distance).abs() < 1e-9, "set {set} step {step}: {} vs {}", f.distance, s.distance);
        }
    }
}

#[test]
fn ties_follow_node_order_in_both_implementations() {
    // unit square: four equal nearest pairs
    let points = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let fast = ward_linkage(&points).unwrap();
    let naive = oracles::naive_ward(&points);
    let pairs: Vec<_> = fast.iter().map(|m| (m.left, m.right)).collect();
    assert_eq!(pairs, naive.iter().map(|m| (m.left, m.right)).collect::<Vec<_>>());
    assert_eq!(pairs[0], (0, 1));
    assert_eq!(pairs[1], (2, 3));
}

#[test]
fn split_profile_matches_recount() {
    // six cells, two features; cells 0..2 carry column 0, cells 2..6 column 1
    let cs = cells(6);
    let mut segs = Vec::new();
    let mut features = BTreeMap::new();
    for (i, &c) in cs.iter().enumerate() {
        for s in 0..=i % 2 {
            let id = format!("s{i}-{s}");
            features.insert(id.clone(), if i < 2 { vec![1, 0] } else { vec![0, 1] });
            segs.push((id, vec![c]));
        }
    }
    let asg = CellAssignment::from_segments(9, segs).unwrap();
    let points: Vec<Vec<f64>> = (0..6).map(|i| vec![if i < 2 { 10.0 } else { 0.0 }, i as f64 * 0.01]).collect();
    let d = agglomerative_ward(&regions(&cs, &points)).unwrap();
    let (k1, k2) = (cut_tree(&d, 1).unwrap(), cut_tree(&d, 2).unwrap());
    let keys = [0..1, 1..2];
    let diff = split_difference(&k1, &k2, &asg, &features, &keys, ShareMode::Membership).unwrap();
    let new_set = k2.members(diff.new_cluster);
    assert_eq!(new_set, cs[..2].iter().copied().collect());
    let cells_of: BTreeMap<String, Vec<CellId>> = asg.segment_to_cells().clone();
    let expected: Vec<f64> = oracles::naive_shares(&cells_of, &features, &new_set)
        .iter()
        .zip(oracles::naive_shares(&cells_of, &features, &k2.members(diff.old_cluster)))
        .map(|(a, b)| a - b)
        .collect();
    assert_eq!(diff.per_column, expected);
    assert_eq!(diff.per_column, vec![1.0, -1.0]);
}

#[test]
fn surface_split_delta_is_one() {
    let schema = default_schema();
    let (unpaved, asphalt) = (schema.column("surface", "unpaved").unwrap(), schema.column("surface", "asphalt").unwrap());
    let cs = cells(5);
    let mut features = BTreeMap::new();
    let mut segs = Vec::new();
    let mut points = Vec::new();
    for (i, &c) in cs.iter().enumerate() {
        let mut bits = vec![0u8; schema.width()];
        bits[if i < 2 { unpaved } else { asphalt }] = 1;
        features.insert(format!("s{i}"), bits);
        segs.push((format!("s{i}"), vec![c]));
        points.push(vec![if i < 2 { 5.0 } else { -5.0 }]);
    }
    let asg = CellAssignment::from_segments(9, segs).unwrap();
    let d = agglomerative_ward(&regions(&cs, &points)).unwrap();
    let keys: Vec<_> = (0..schema.keys().len()).map(|k| schema.key_columns(k)).collect();
    let diff = split_difference(&cut_tree(&d, 1).unwrap(), &cut_tree(&d, 2).unwrap(), &asg, &features, &keys, ShareMode::Membership).unwrap();
    assert_eq!(diff.per_column[unpaved], 1.0);
    assert_eq!(diff.per_column[asphalt], -1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cuts_refine_and_merges_are_monotone(seed in any::<u64>(), n in 2usize..30, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, d);
        let dendro = agglomerative_ward(&regions(&cells(n), &points)).unwrap();
        prop_assert!(dendro.merges.windows(2).all(|w| w[0].distance <= w[1].distance + 1e-12));
        for k in 1..n {
            let (coarse, fine) = (cut_tree(&dendro, k).unwrap(), cut_tree(&dendro, k + 1).unwrap());
            for f in 0..=k {
                let parents: BTreeSet<usize> = fine.members(f).iter().map(|c| coarse.labels[c]).collect();
                prop_assert_eq!(parents.len(), 1);
            }
        }
    }

    #[test]
    fn labels_ignore_input_order(seed in any::<u64>(), n in 3usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, 3);
        let cs = cells(n);
        let forward = cut_tree(&agglomerative_ward(&regions(&cs, &points)).unwrap(), 3.min(n)).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut shuffled = BTreeMap::new();
        for i in order {
            shuffled.insert(cs[i], RegionEmbedding { cell: cs[i], values: points[i].clone(), segment_count: 1 });
        }
        let again = cut_tree(&agglomerative_ward(&shuffled).unwrap(), 3.min(n)).unwrap();
        prop_assert_eq!(forward, again);
    }
}
