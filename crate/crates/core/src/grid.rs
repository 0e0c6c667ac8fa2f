//! Hexagonal microregions: point-to-cell lookup and polyline traversal.
//!
//! Cells come from the H3 hierarchical index (via `h3o`). A segment belongs
//! to every cell its polyline passes through. Each chord between consecutive
//! vertices is walked on a lattice of points spaced at most `step_m` apart
//! (planar interpolation in lon/lat): lattice points are probed with a coarse
//! stride, and any stride whose end cells differ is bisected down to
//! neighbouring lattice points. Two probes in the same cell cover everything
//! between them because cells are convex at city scale.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use h3o::{CellIndex, LatLng, Resolution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{haversine_m, RoadNetwork, RoadSegment};

pub const DEFAULT_RESOLUTION: u8 = 9;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("coordinate ({lon}, {lat}) is outside the WGS84 range")]
    Coordinate { lon: f64, lat: f64 },
    #[error("resolution {0} is outside 0..=15")]
    Resolution(u8),
    #[error("`{0}` is not a valid cell address")]
    Address(String),
    #[error("cell {cell} has resolution {found}, expected {expected}")]
    MixedResolution { cell: String, found: u8, expected: u8 },
    #[error("segment `{0}` appears in the assignment without any cell")]
    EmptySegment(String),
}

/// A hexagonal (or pentagonal) cell at a fixed resolution.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellId(CellIndex);

impl CellId {
    pub fn address(self) -> u64 {
        u64::from(self.0)
    }

    pub fn resolution(self) -> u8 {
        u8::from(self.0.resolution())
    }

    pub fn index(self) -> CellIndex {
        self.0
    }

    /// Cell centre as `(lon, lat)`.
    pub fn center(self) -> (f64, f64) {
        let ll = LatLng::from(self.0);
        (ll.lng(), ll.lat())
    }

    /// Boundary vertices as `(lon, lat)`, not closed.
    pub fn boundary(self) -> Vec<(f64, f64)> {
        self.0.boundary().iter().map(|ll| (ll.lng(), ll.lat())).collect()
    }

    pub fn is_pentagon(self) -> bool {
        self.0.is_pentagon()
    }

    /// Whether two cells share an edge. A cell is not its own neighbour.
    pub fn is_neighbor(self, other: CellId) -> bool {
        self.0.is_neighbor_with(other.0).unwrap_or(false)
    }

    pub fn parent(self, resolution: u8) -> Option<CellId> {
        let res = Resolution::try_from(resolution).ok()?;
        self.0.parent(res).map(CellId)
    }

    pub fn children(self, resolution: u8) -> Vec<CellId> {
        match Resolution::try_from(resolution) {
            Ok(res) => self.0.children(res).map(CellId).collect(),
            Err(_) => Vec::new(),
        }
    }

    pub fn neighbors(self) -> Vec<CellId> {
        self.0.grid_disk::<Vec<_>>(1).into_iter().filter(|&c| c != self.0).map(CellId).collect()
    }
}

impl From<CellIndex> for CellId {
    fn from(index: CellIndex) -> Self {
        Self(index)
    }
}

impl PartialOrd for CellId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.address().cmp(&other.address())
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CellId({})", self.0)
    }
}

impl FromStr for CellId {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellIndex::from_str(s.trim())
            .map(CellId)
            .map_err(|_| GridError::Address(s.to_string()))
    }
}

impl Serialize for CellId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn resolution(res: u8) -> Result<Resolution, GridError> {
    Resolution::try_from(res).map_err(|_| GridError::Resolution(res))
}

/// Cell containing `(lon, lat)` at `res`.
pub fn cell_of_point(lon: f64, lat: f64, res: u8) -> Result<CellId, GridError> {
    let resolution = resolution(res)?;
    if !crate::ingest::valid_lon_lat(lon, lat) {
        return Err(GridError::Coordinate { lon, lat });
    }
    let ll = LatLng::new(lat, lon).map_err(|_| GridError::Coordinate { lon, lat })?;
    Ok(CellId(ll.to_cell(resolution)))
}

/// Chord-walking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    /// Maximum spacing of lattice points along a chord, in meters.
    pub step_m: f64,
    /// Probe stride as a fraction of the resolution's mean edge length.
    pub coarse_fraction: f64,
    /// Bisect below the lattice spacing when consecutive lattice cells are
    /// not neighbours, so corner-clipped cells are still reported.
    pub fill_gaps: bool,
}

impl Default for Traversal {
    fn default() -> Self {
        Self {
            step_m: 1.0,
            coarse_fraction: 0.25,
            fill_gaps: true,
        }
    }
}

/// Ordered set that remembers first insertion.
struct FirstTouch {
    order: Vec<CellId>,
    seen: HashSet<CellId>,
}

impl FirstTouch {
    fn push(&mut self, cell: CellId) {
        if self.seen.insert(cell) {
            self.order.push(cell);
        }
    }
}

struct Chord {
    a: (f64, f64),
    b: (f64, f64),
    resolution: Resolution,
}

impl Chord {
    fn at(&self, t: f64) -> CellId {
        let lon = self.a.0 + (self.b.0 - self.a.0) * t;
        let lat = self.a.1 + (self.b.1 - self.a.1) * t;
        let ll = LatLng::new(lat, lon).expect("interpolated point of valid endpoints");
        CellId(ll.to_cell(self.resolution))
    }
}

/// Cells crossed by a segment's polyline, in first-touch order.
pub fn cells_of_segment(seg: &RoadSegment, res: u8) -> Result<Vec<CellId>, GridError> {
    cells_of_polyline(&seg.geometry, res, &Traversal::default())
}

pub fn cells_of_polyline(points: &[(f64, f64)], res: u8, cfg: &Traversal) -> Result<Vec<CellId>, GridError> {
    let resolution = resolution(res)?;
    if let Some(&(lon, lat)) = points.iter().find(|&&(lon, lat)| !crate::ingest::valid_lon_lat(lon, lat)) {
        return Err(GridError::Coordinate { lon, lat });
    }
    let mut out = FirstTouch {
        order: Vec::new(),
        seen: HashSet::new(),
    };
    let coarse_m = (resolution.edge_length_m() * cfg.coarse_fraction).max(cfg.step_m);
    for (k, pair) in points.windows(2).enumerate() {
        let chord = Chord {
            a: pair[0],
            b: pair[1],
            resolution,
        };
        let length = haversine_m(pair[0], pair[1]);
        let n = ((length / cfg.step_m).ceil() as usize).max(1);
        let stride = ((coarse_m / cfg.step_m).floor() as usize).clamp(1, n);
        let t = |i: usize| i as f64 / n as f64;

        let mut prev = chord.at(0.0);
        if k == 0 {
            out.push(prev);
        }
        let mut i = 0;
        while i < n {
            let j = (i + stride).min(n);
            let cj = chord.at(t(j));
            walk(&chord, cfg, n, (i, prev), (j, cj), &mut out);
            prev = cj;
            i = j;
        }
    }
    if points.len() == 1 {
        out.push(cell_of_point(points[0].0, points[0].1, res)?);
    }
    Ok(out.order)
}

fn walk(chord: &Chord, cfg: &Traversal, n: usize, lo: (usize, CellId), hi: (usize, CellId), out: &mut FirstTouch) {
    if lo.1 == hi.1 {
        return;
    }
    if hi.0 == lo.0 + 1 {
        if cfg.fill_gaps && !lo.1.is_neighbor(hi.1) {
            fill_gap(chord, lo.0 as f64 / n as f64, lo.1, hi.0 as f64 / n as f64, hi.1, 24, out);
        }
        out.push(hi.1);
        return;
    }
    let mid = (lo.0 + hi.0) / 2;
    let cm = chord.at(mid as f64 / n as f64);
    walk(chord, cfg, n, lo, (mid, cm), out);
    walk(chord, cfg, n, (mid, cm), hi, out);
}

fn fill_gap(chord: &Chord, t0: f64, c0: CellId, t1: f64, c1: CellId, depth: u32, out: &mut FirstTouch) {
    if depth == 0 || c0 == c1 || c0.is_neighbor(c1) {
        return;
    }
    let tm = 0.5 * (t0 + t1);
    let cm = chord.at(tm);
    fill_gap(chord, t0, c0, tm, cm, depth - 1, out);
    out.push(cm);
    fill_gap(chord, tm, cm, t1, c1, depth - 1, out);
}

/// Segment-to-cell incidence in both directions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellAssignment {
    resolution: u8,
    segment_to_cells: BTreeMap<String, Vec<CellId>>,
    cell_to_segments: BTreeMap<CellId, Vec<String>>,
}

impl CellAssignment {
    /// Builds both maps from `(segment, cells)` rows; segment order within a
    /// cell is sorted by id.
    pub fn from_segments(
        resolution: u8,
        rows: impl IntoIterator<Item = (String, Vec<CellId>)>,
    ) -> Result<Self, GridError> {
        let mut segment_to_cells = BTreeMap::new();
        let mut cell_to_segments: BTreeMap<CellId, Vec<String>> = BTreeMap::new();
        for (seg, cells) in rows {
            if cells.is_empty() {
                return Err(GridError::EmptySegment(seg));
            }
            for &c in &cells {
                if c.resolution() != resolution {
                    return Err(GridError::MixedResolution {
                        cell: c.to_string(),
                        found: c.resolution(),
                        expected: resolution,
                    });
                }
                cell_to_segments.entry(c).or_default().push(seg.clone());
            }
            segment_to_cells.insert(seg, cells);
        }
        for segs in cell_to_segments.values_mut() {
            segs.sort();
            segs.dedup();
        }
        Ok(Self {
            resolution,
            segment_to_cells,
            cell_to_segments,
        })
    }

    /// Rebuilds from `(segment, cell)` incidence rows, keeping row order per segment.
    pub fn from_incidences(
        resolution: u8,
        pairs: impl IntoIterator<Item = (String, CellId)>,
    ) -> Result<Self, GridError> {
        let mut rows: BTreeMap<String, Vec<CellId>> = BTreeMap::new();
        for (seg, cell) in pairs {
            let cells = rows.entry(seg).or_default();
            if !cells.contains(&cell) {
                cells.push(cell);
            }
        }
        Self::from_segments(resolution, rows)
    }

    pub fn resolution(&self) -> u8 {
        self.resolution
    }

    pub fn segment_to_cells(&self) -> &BTreeMap<String, Vec<CellId>> {
        &self.segment_to_cells
    }

    pub fn cell_to_segments(&self) -> &BTreeMap<CellId, Vec<String>> {
        &self.cell_to_segments
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cell_to_segments.keys().copied()
    }

    pub fn segments_in(&self, cell: CellId) -> &[String] {
        self.cell_to_segments.get(&cell).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(segment, cell)` rows, segments sorted by id, cells in first-touch order.
    pub fn incidences(&self) -> impl Iterator<Item = (&str, CellId)> + '_ {
        self.segment_to_cells
            .iter()
            .flat_map(|(s, cells)| cells.iter().map(move |&c| (s.as_str(), c)))
    }

    /// Cities whose segments touch each cell.
    pub fn cell_cities(&self, net: &RoadNetwork) -> BTreeMap<CellId, Vec<String>> {
        let city_of: BTreeMap<&str, &str> = net.segments().iter().map(|s| (s.id.as_str(), s.city.as_str())).collect();
        self.cell_to_segments
            .iter()
            .map(|(&cell, segs)| {
                let mut cities: Vec<String> = segs
                    .iter()
                    .filter_map(|s| city_of.get(s.as_str()).map(|c| c.to_string()))
                    .collect();
                cities.sort();
                cities.dedup();
                (cell, cities)
            })
            .collect()
    }
}

/// Assigns every segment of the network to the cells it crosses.
pub fn assign_network(net: &RoadNetwork, res: u8) -> Result<CellAssignment, GridError> {
    assign_network_with(net, res, &Traversal::default())
}

pub fn assign_network_with(net: &RoadNetwork, res: u8, cfg: &Traversal) -> Result<CellAssignment, GridError> {
    let rows = net
        .segments()
        .par_iter()
        .map(|s| cells_of_polyline(&s.geometry, res, cfg).map(|cells| (s.id.clone(), cells)))
        .collect::<Result<Vec<_>, _>>()?;
    CellAssignment::from_segments(res, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POZNAN: (f64, f64) = (16.9252, 52.4064);

    fn offset(p: (f64, f64), east_m: f64, north_m: f64) -> (f64, f64) {
        let dlat = north_m / 111_195.0;
        let dlon = east_m / (111_195.0 * p.1.to_radians().cos());
        (p.0 + dlon, p.1 + dlat)
    }

    #[test]
    fn centroid_is_a_fixed_point() {
        let c = cell_of_point(POZNAN.0, POZNAN.1, 9).unwrap();
        let (lon, lat) = c.center();
        assert_eq!(cell_of_point(lon, lat, 9).unwrap(), c);
        let near = offset((lon, lat), 1.0, 0.0);
        assert_eq!(cell_of_point(near.0, near.1, 9).unwrap(), c);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(cell_of_point(181.0, 0.0, 9), Err(GridError::Coordinate { .. })));
        assert!(matches!(cell_of_point(0.0, 91.0, 9), Err(GridError::Coordinate { .. })));
        assert_eq!(cell_of_point(0.0, 0.0, 16), Err(GridError::Resolution(16)));
    }

    #[test]
    fn address_string_round_trip() {
        let c = cell_of_point(POZNAN.0, POZNAN.1, 9).unwrap();
        let s = c.to_string();
        assert_eq!(s.len(), 15);
        assert_eq!(s.parse::<CellId>().unwrap(), c);
        assert!("zz".parse::<CellId>().is_err());
    }

    #[test]
    fn short_segment_inside_one_cell() {
        let c = cell_of_point(POZNAN.0, POZNAN.1, 9).unwrap();
        let centre = c.center();
        let pts = [offset(centre, -10.0, 0.0), offset(centre, 10.0, 5.0)];
        assert_eq!(cells_of_polyline(&pts, 9, &Traversal::default()).unwrap(), vec![c]);
    }

    #[test]
    fn crossing_one_edge_gives_two_cells() {
        let c = cell_of_point(POZNAN.0, POZNAN.1, 9).unwrap();
        let n = c.neighbors()[0];
        let (a, b) = (c.center(), n.center());
        // short chord straddling the shared edge midpoint
        let mid = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        let p = (mid.0 + (a.0 - mid.0) * 0.2, mid.1 + (a.1 - mid.1) * 0.2);
        let q = (mid.0 + (b.0 - mid.0) * 0.2, mid.1 + (b.1 - mid.1) * 0.2);
        assert_eq!(cells_of_polyline(&[p, q], 9, &Traversal::default()).unwrap(), vec![c, n]);
    }

    #[test]
    fn long_chord_visits_adjacent_cells_in_order() {
        let a = POZNAN;
        let b = offset(a, 1500.0, 700.0);
        let cells = cells_of_polyline(&[a, b], 9, &Traversal::default()).unwrap();
        assert!(cells.len() >= 6);
        assert_eq!(cells[0], cell_of_point(a.0, a.1, 9).unwrap());
        assert_eq!(*cells.last().unwrap(), cell_of_point(b.0, b.1, 9).unwrap());
        for w in cells.windows(2) {
            assert!(w[0].is_neighbor(w[1]), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn assignment_maps_are_inverse() {
        let mk = |id: &str, pts: Vec<(f64, f64)>| RoadSegment {
            id: id.into(),
            city: "p".into(),
            geometry: pts,
            tags: Default::default(),
        };
        let net = RoadNetwork::new(vec![
            mk("a", vec![POZNAN, offset(POZNAN, 400.0, 0.0)]),
            mk("b", vec![offset(POZNAN, 0.0, 300.0), offset(POZNAN, 50.0, -200.0)]),
        ])
        .unwrap();
        let asg = assign_network(&net, 9).unwrap();
        for (s, cells) in asg.segment_to_cells() {
            assert!(!cells.is_empty());
            for c in cells {
                assert!(asg.segments_in(*c).contains(s));
            }
        }
        for (c, segs) in asg.cell_to_segments() {
            for s in segs {
                assert!(asg.segment_to_cells()[s].contains(c));
            }
        }
        let rebuilt =
            CellAssignment::from_incidences(9, asg.incidences().map(|(s, c)| (s.to_string(), c))).unwrap();
        assert_eq!(rebuilt, asg);
    }

    #[test]
    fn mixed_resolution_rejected() {
        let c8 = cell_of_point(POZNAN.0, POZNAN.1, 8).unwrap();
        assert!(matches!(
            CellAssignment::from_segments(9, [("s".to_string(), vec![c8])]),
            Err(GridError::MixedResolution { .. })
        ));
    }
}
