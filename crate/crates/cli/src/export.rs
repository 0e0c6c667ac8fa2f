//! Hexagon polygons as GeoJSON.

use std::collections::BTreeMap;

use hexembed::grid::CellId;
use serde_json::{json, Map, Value};

/// Closed boundary ring, counterclockwise in (lon, lat).
pub fn cell_ring(cell: CellId) -> Vec<[f64; 2]> {
    let mut ring: Vec<[f64; 2]> = cell.boundary().into_iter().map(|(x, y)| [x, y]).collect();
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    if let Some(&first) = ring.first() {
        ring.push(first);
    }
    ring
}

/// Shoelace area; positive for counterclockwise rings.
pub fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// One Polygon feature per cell; `properties` must not contain `cell_address`.
pub fn export_geojson(cells: &BTreeMap<CellId, Map<String, Value>>) -> Value {
    let features: Vec<Value> = cells
        .iter()
        .map(|(&cell, props)| {
            let mut properties = Map::new();
            properties.insert("cell_address".into(), Value::String(cell.to_string()));
            properties.extend(props.clone());
            json!({
                "type": "Feature",
                "properties": properties,
                "geometry": {"type": "Polygon", "coordinates": [cell_ring(cell)]},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
