//! "Gridville": a synthetic road corpus with planted archetypes.
//!
//! Every pseudo-city holds one street grid per archetype. Grids are kept more
//! than a kilometre apart so every resolution-9 cell sees a single archetype,
//! which makes the planted partition recoverable from region embeddings.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ingest::{haversine_m, RoadNetwork, RoadSegment};

pub const CITIES: [&str; 3] = ["north", "south", "east"];

/// Where each pseudo-city's south-west corner sits (lon, lat).
const ORIGINS: [(f64, f64); 3] = [(17.00, 51.10), (17.60, 50.90), (18.20, 51.05)];

/// Nodes per grid along longitude and latitude.
const NODES: (usize, usize) = (7, 6);
/// Street spacing.
const SPACING_M: f64 = 130.0;
/// Offset between neighbouring zones of one city.
const ZONE_STEP_M: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Arterial,
    PavedResidential,
    UnpavedResidential,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Arterial, Archetype::PavedResidential, Archetype::UnpavedResidential];

    pub fn label(self) -> usize {
        self as usize
    }

    /// Base tags plus at most one noisy key.
    fn tags(self, rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
        let mut t: Vec<(&str, String)> = match self {
            Archetype::Arterial => vec![
                ("highway", "primary".into()),
                ("oneway", "yes".into()),
                ("lanes", if rng.random_bool(0.2) { "4" } else { "3" }.into()),
                ("maxspeed", "70".into()),
                ("surface", "asphalt".into()),
            ],
            Archetype::PavedResidential => vec![
                ("highway", "residential".into()),
                ("oneway", "no".into()),
                ("maxspeed", if rng.random_bool(0.2) { "30" } else { "50" }.into()),
                ("surface", "asphalt".into()),
                ("lanes", "2".into()),
            ],
            Archetype::UnpavedResidential => vec![
                ("highway", "residential".into()),
                ("surface", if rng.random_bool(0.2) { "gravel" } else { "unpaved" }.into()),
            ],
        };
        t.sort();
        t.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Archetype::Arterial => "arterial",
            Archetype::PavedResidential => "paved_residential",
            Archetype::UnpavedResidential => "unpaved_residential",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Gridville {
    pub network: RoadNetwork,
    /// Planted archetype of every segment.
    pub labels: BTreeMap<String, Archetype>,
}

impl Gridville {
    /// One GeoJSON `FeatureCollection` per city, in [`CITIES`] order.
    pub fn city_collections(&self) -> Vec<(String, Value)> {
        CITIES
            .iter()
            .map(|&city| {
                let features: Vec<Value> = self
                    .network
                    .segments()
                    .iter()
                    .filter(|s| s.city == city)
                    .map(|s| {
                        json!({
                            "type": "Feature",
                            "id": s.id,
                            "properties": s.tags,
                            "geometry": {
                                "type": "LineString",
                                "coordinates": s.geometry.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
                            },
                        })
                    })
                    .collect();
                (city.to_string(), json!({"type": "FeatureCollection", "features": features}))
            })
            .collect()
    }

    /// Planted labels as `segment_id,archetype` lines with a header.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("segment_id,archetype\n");
        for (id, a) in &self.labels {
            out.push_str(&format!("{id},{a}\n"));
        }
        out
    }
}

/// Moves `from` by `east` and `north` metres on a local tangent plane.
fn offset(from: (f64, f64), east: f64, north: f64) -> (f64, f64) {
    let m_per_deg_lat = haversine_m((from.0, from.1 - 0.5), (from.0, from.1 + 0.5));
    let m_per_deg_lon = haversine_m((from.0 - 0.5, from.1), (from.0 + 0.5, from.1));
    (from.0 + east / m_per_deg_lon, from.1 + north / m_per_deg_lat)
}

/// Builds the corpus. The seed only drives tag noise; geometry is fixed.
pub fn gridville(seed: u64) -> Gridville {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut labels = BTreeMap::new();
    for (city, &origin) in CITIES.iter().zip(&ORIGINS) {
        for (z, archetype) in Archetype::ALL.into_iter().enumerate() {
            let corner = offset(origin, z as f64 * ZONE_STEP_M, 0.0);
            let node = |i: usize, j: usize| offset(corner, i as f64 * SPACING_M, j as f64 * SPACING_M);
            let mut edges = Vec::new();
            for j in 0..NODES.1 {
                for i in 0..NODES.0 - 1 {
                    edges.push((node(i, j), node(i + 1, j)));
                }
            }
            for i in 0..NODES.0 {
                for j in 0..NODES.1 - 1 {
                    edges.push((node(i, j), node(i, j + 1)));
                }
            }
            for (e, (a, b)) in edges.into_iter().enumerate() {
                let id = format!("{city}-{z}-{e:03}");
                labels.insert(id.clone(), archetype);
                segments.push(RoadSegment {
                    id,
                    city: city.to_string(),
                    geometry: vec![a, b],
                    tags: archetype.tags(&mut rng),
                });
            }
        }
    }
    Gridville {
        network: RoadNetwork::new(segments).expect("generated segments are valid"),
        labels,
    }
}
