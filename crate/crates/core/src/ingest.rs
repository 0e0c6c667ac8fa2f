//! Road-network ingestion from GeoJSON `FeatureCollection`s.
//!
//! Every `LineString` feature becomes one [`RoadSegment`]; a
//! `MultiLineString` becomes one segment per part with `#k` id suffixes.
//! Tag values are kept as raw strings, normalization happens in
//! [`crate::schema`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("input is not a GeoJSON FeatureCollection")]
    NotFeatureCollection,
    #[error("no usable LineString features ({skipped} skipped)")]
    Empty { skipped: usize },
    #[error("duplicate segment id `{0}`")]
    DuplicateId(String),
    #[error("invalid segment `{id}`: {reason}")]
    InvalidSegment { id: String, reason: String },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One driveable way: polyline, raw tags and the city it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: String,
    pub city: String,
    /// `(longitude, latitude)` pairs in degrees.
    #[serde(rename = "coords")]
    pub geometry: Vec<(f64, f64)>,
    pub tags: BTreeMap<String, String>,
}

impl RoadSegment {
    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |reason: &str| IngestError::InvalidSegment {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.geometry.len() < 2 {
            return Err(invalid("fewer than 2 points"));
        }
        if !self.geometry.iter().all(|&(lon, lat)| valid_lon_lat(lon, lat)) {
            return Err(invalid("coordinate outside WGS84 range"));
        }
        for (k, v) in &self.tags {
            if k.chars().any(char::is_uppercase) {
                return Err(invalid("tag key is not lowercase"));
            }
            if v.is_empty() {
                return Err(invalid("empty tag value"));
            }
        }
        Ok(())
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }

    /// Great-circle length of the polyline in meters.
    pub fn length_m(&self) -> f64 {
        self.geometry
            .windows(2)
            .map(|w| haversine_m(w[0], w[1]))
            .sum()
    }
}

pub(crate) fn valid_lon_lat(lon: f64, lat: f64) -> bool {
    lon.is_finite() && lat.is_finite() && (-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat)
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Haversine distance in meters between two `(lon, lat)` points.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) * 0.5).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) * 0.5).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Validated collection of segments with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoadNetwork {
    segments: Vec<RoadSegment>,
    cities: BTreeSet<String>,
}

impl RoadNetwork {
    pub fn new(segments: Vec<RoadSegment>) -> Result<Self, IngestError> {
        let mut seen = HashSet::with_capacity(segments.len());
        for seg in &segments {
            seg.validate()?;
            if !seen.insert(seg.id.as_str()) {
                return Err(IngestError::DuplicateId(seg.id.clone()));
            }
        }
        let cities = segments.iter().map(|s| s.city.clone()).collect();
        Ok(Self { segments, cities })
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn cities(&self) -> &BTreeSet<String> {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&RoadSegment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Concatenates networks in order; ids must stay unique.
    pub fn merge(networks: impl IntoIterator<Item = RoadNetwork>) -> Result<Self, IngestError> {
        let segments = networks.into_iter().flat_map(|n| n.segments).collect();
        Self::new(segments)
    }

    pub fn into_segments(self) -> Vec<RoadSegment> {
        self.segments
    }

    /// Writes one JSON object per segment (`id`, `city`, `coords`, `tags`).
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), IngestError> {
        for seg in &self.segments {
            serde_json::to_writer(&mut out, seg).map_err(|e| IngestError::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, IngestError> {
        let mut segments = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let seg: RoadSegment = serde_json::from_str(&line).map_err(|e| IngestError::Record {
                line: i + 1,
                message: e.to_string(),
            })?;
            segments.push(seg);
        }
        Self::new(segments)
    }

    /// Exports the network as a GeoJSON `FeatureCollection` of `LineString`s.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .segments
            .iter()
            .map(|s| {
                let coords: Vec<Value> = s
                    .geometry
                    .iter()
                    .map(|&(lon, lat)| Value::from(vec![lon, lat]))
                    .collect();
                let props: Map<String, Value> = s
                    .tags
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect();
                serde_json::json!({
                    "type": "Feature",
                    "id": s.id,
                    "geometry": {"type": "LineString", "coordinates": coords},
                    "properties": props,
                })
            })
            .collect();
        serde_json::json!({"type": "FeatureCollection", "features": features})
    }
}

/// Counters for features or values that were dropped or coerced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestWarnings {
    /// Features without usable line geometry.
    pub skipped_features: usize,
    /// List-valued properties reduced to their first element.
    pub list_values: usize,
}

#[derive(Debug, Clone)]
pub struct ParsedCollection {
    pub network: RoadNetwork,
    pub warnings: IngestWarnings,
}

/// Parses a GeoJSON `FeatureCollection` of road lines for one city.
pub fn parse_road_collection(input: &[u8], city: &str) -> Result<ParsedCollection, IngestError> {
    let root: Value = serde_json::from_slice(input).map_err(|e| IngestError::Json {
        offset: byte_offset(input, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let features = match (&root["type"], &root["features"]) {
        (Value::String(t), Value::Array(f)) if t == "FeatureCollection" => f,
        _ => return Err(IngestError::NotFeatureCollection),
    };

    let mut warnings = IngestWarnings::default();
    let mut segments = Vec::new();
    for (index, feature) in features.iter().enumerate() {
        let parts = match line_parts(&feature["geometry"]) {
            Some(parts) => parts,
            None => {
                warnings.skipped_features += 1;
                continue;
            }
        };
        let Some(props) = feature["properties"].as_object() else {
            warnings.skipped_features += 1;
            continue;
        };
        let base_id = feature_id(feature, props).unwrap_or_else(|| format!("{city}/{index}"));
        let tags = collect_tags(props, &mut warnings);

        match parts {
            LineParts::Single(coords) => segments.push(RoadSegment {
                id: base_id,
                city: city.to_string(),
                geometry: coords,
                tags,
            }),
            LineParts::Multi(lines) => {
                for (k, coords) in lines.into_iter().enumerate() {
                    segments.push(RoadSegment {
                        id: format!("{base_id}#{k}"),
                        city: city.to_string(),
                        geometry: coords,
                        tags: tags.clone(),
                    });
                }
            }
        }
    }

    // Parts with unusable geometry are dropped individually.
    let before = segments.len();
    segments.retain(|s| s.geometry.len() >= 2 && s.geometry.iter().all(|&(x, y)| valid_lon_lat(x, y)));
    warnings.skipped_features += before - segments.len();

    if segments.is_empty() {
        return Err(IngestError::Empty {
            skipped: warnings.skipped_features,
        });
    }
    Ok(ParsedCollection {
        network: RoadNetwork::new(segments)?,
        warnings,
    })
}

enum LineParts {
    Single(Vec<(f64, f64)>),
    Multi(Vec<Vec<(f64, f64)>>),
}

fn line_parts(geometry: &Value) -> Option<LineParts> {
    let coords = &geometry["coordinates"];
    match geometry["type"].as_str()? {
        "LineString" => Some(LineParts::Single(positions(coords)?)),
        "MultiLineString" => {
            let lines = coords
                .as_array()?
                .iter()
                .map(positions)
                .collect::<Option<Vec<_>>>()?;
            Some(LineParts::Multi(lines))
        }
        _ => None,
    }
}

fn positions(value: &Value) -> Option<Vec<(f64, f64)>> {
    value
        .as_array()?
        .iter()
        .map(|p| {
            let p = p.as_array()?;
            Some((p.first()?.as_f64()?, p.get(1)?.as_f64()?))
        })
        .collect()
}

fn feature_id(feature: &Value, props: &Map<String, Value>) -> Option<String> {
    [&feature["id"], props.get("id").unwrap_or(&Value::Null), props.get("osmid").unwrap_or(&Value::Null)]
        .into_iter()
        .find_map(scalar_string)
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => items.first().and_then(scalar_string),
        _ => None,
    }
}

fn collect_tags(props: &Map<String, Value>, warnings: &mut IngestWarnings) -> BTreeMap<String, String> {
    let mut tags = BTreeMap::new();
    for (key, value) in props {
        let value = match value {
            Value::Array(items) => {
                warnings.list_values += 1;
                items.first().and_then(scalar_string)
            }
            other => scalar_string(other),
        };
        if let Some(v) = value {
            tags.insert(key.to_lowercase(), v);
        }
    }
    tags
}

/// serde_json reports 1-based line and column; convert to a byte offset.
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = input
        .split_inclusive(|&b| b == b'\n')
        .take(line - 1)
        .map(<[u8]>::len)
        .sum::<usize>();
    (line_start + column.saturating_sub(1)).min(input.len())
}

/// Keeps segments whose `highway` value is in `allowed`, preserving order.
pub fn filter_driveable(net: &RoadNetwork, allowed: &BTreeSet<String>) -> RoadNetwork {
    let segments: Vec<RoadSegment> = net
        .segments
        .iter()
        .filter(|s| s.tag("highway").is_some_and(|h| allowed.contains(h)))
        .cloned()
        .collect();
    let cities = segments.iter().map(|s| s.city.clone()).collect();
    RoadNetwork { segments, cities }
}
