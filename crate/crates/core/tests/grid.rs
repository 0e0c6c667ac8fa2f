mod oracles;

use std::collections::BTreeSet;

use hexembed::fixture::gridville;
use hexembed::grid::{assign_network, cell_of_point, cells_of_polyline, CellId, Traversal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn point_lookup_matches_reference_implementation() {
    let reference = oracles::h3_reference();
    assert_eq!(reference.points.len(), 1000);
    for (i, p) in reference.points.iter().enumerate() {
        let got = cell_of_point(p.lng, p.lat, p.res).unwrap();
        assert_eq!(got.to_string(), p.cell, "point {i} ({}, {}) at res {}", p.lng, p.lat, p.res);
    }
}

#[test]
fn segments_match_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..200 {
        let seg = oracles::random_segment(&mut rng);
        let got: BTreeSet<CellId> = cells_of_polyline(&seg, 9, &Traversal::default()).unwrap().into_iter().collect();
        assert_eq!(got, oracles::dense_cells(&seg, 9), "segment {i}: {seg:?}");
    }
}

#[test]
fn consecutive_cells_are_adjacent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let seg = oracles::random_segment(&mut rng);
        let cells = cells_of_polyline(&seg, 10, &Traversal::default()).unwrap();
        for w in cells.windows(2) {
            assert!(w[0].is_neighbor(w[1]), "{} then {} along {seg:?}", w[0], w[1]);
        }
    }
}

#[test]
fn finer_cells_sit_under_coarser_cells() {
    // The hierarchy only nests approximately: a child may poke out of its
    // parent by a sliver. Every fine cell must still have its parent among
    // the coarse cells or their immediate neighbours.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let seg = oracles::random_segment(&mut rng);
        let fine = cells_of_polyline(&seg, 9, &Traversal::default()).unwrap();
        let coarse: BTreeSet<CellId> = cells_of_polyline(&seg, 8, &Traversal::default()).unwrap().into_iter().collect();
        let near: BTreeSet<CellId> = coarse.iter().flat_map(|c| c.neighbors()).chain(coarse.iter().copied()).collect();
        for c in fine {
            let parent = c.parent(8).unwrap();
            assert!(near.contains(&parent), "{c} has parent {parent} far from {coarse:?}");
        }
    }
}

#[test]
fn fixture_cells_are_union_of_segment_cells() {
    let g = gridville(42);
    let asg = assign_network(&g.network, 9).unwrap();
    let mut union = BTreeSet::new();
    for s in g.network.segments() {
        union.extend(oracles::dense_cells(&s.geometry, 9));
    }
    assert_eq!(asg.cells().collect::<BTreeSet<_>>(), union);
    for (id, cell) in asg.incidences() {
        assert!(asg.segments_in(cell).iter().any(|s| s == id));
    }
    assert_eq!(asg, assign_network(&g.network, 9).unwrap());
}
