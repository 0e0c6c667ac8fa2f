//! Tag normalization and one-hot encoding of road segments.
//!
//! A [`FeatureSchema`] lists the tag keys in column order and, per key, an
//! ordered list of bins. A bin is either categorical (matched by name and
//! aliases), a half-open numeric interval `[lo, hi)`, or the catch-all
//! `other` bin which must come last.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RoadNetwork, RoadSegment};

pub const OTHER_BIN: &str = "other";
pub const MPH_TO_KMH: f64 = 1.609344;

/// The ten tag keys, in column order.
pub const DEFAULT_KEYS: [&str; 10] = [
    "oneway", "highway", "surface", "maxspeed", "lanes", "bridge", "junction", "access", "tunnel", "width",
];

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema key `{0}` has no bins")]
    NoBins(String),
    #[error("key `{key}` lists bin `{bin}` twice")]
    DuplicateBin { key: String, bin: String },
    #[error("key `{0}`: the `other` bin must be last")]
    OtherNotLast(String),
    #[error("key `{key}`: interval bins must have strictly increasing, non-overlapping edges (bin `{bin}`)")]
    BadInterval { key: String, bin: String },
    #[error("key `{key}` has interval bins but no numeric unit")]
    IntervalWithoutUnit { key: String },
    #[error("key `{0}` appears twice")]
    DuplicateKey(String),
    #[error("bins given for unknown key `{0}`")]
    UnknownKey(String),
    #[error("tag statistics need a non-empty network")]
    EmptyNetwork,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How raw values of a key are parsed before interval lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Unit {
    #[default]
    #[serde(rename = "none")]
    Categorical,
    /// Speeds; `mph` values are converted.
    #[serde(rename = "km/h")]
    SpeedKmh,
    /// Lengths rounded to whole meters; decimal comma accepted.
    #[serde(rename = "m")]
    Meters,
    /// Positive integers.
    #[serde(rename = "count")]
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub name: String,
    /// Extra raw spellings (lowercase) that select this bin.
    #[serde(rename = "match", default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Bin {
    fn category(name: &str, aliases: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            lo: None,
            hi: None,
        }
    }

    fn interval(name: &str, lo: f64, hi: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            aliases: Vec::new(),
            lo: Some(lo),
            hi,
        }
    }

    fn other() -> Self {
        Self::category(OTHER_BIN, &[])
    }

    pub fn is_interval(&self) -> bool {
        self.lo.is_some() || self.hi.is_some()
    }

    pub fn is_other(&self) -> bool {
        self.name == OTHER_BIN
    }

    fn contains(&self, x: f64) -> bool {
        self.is_interval()
            && self.lo.is_none_or(|lo| x >= lo)
            && self.hi.is_none_or(|hi| x < hi)
    }

    fn matches(&self, value: &str) -> bool {
        (!self.is_interval() && !self.is_other() && self.name == value) || self.aliases.iter().any(|a| a == value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeySpec {
    pub name: String,
    pub unit: Unit,
    pub bins: Vec<Bin>,
}

impl KeySpec {
    fn other_index(&self) -> Option<usize> {
        self.bins.last().filter(|b| b.is_other()).map(|_| self.bins.len() - 1)
    }
}

/// On-disk layout: `version`, ordered `keys`, per-key ordered `bins`.
#[derive(Debug, Serialize, Deserialize)]
struct SchemaFile {
    version: String,
    keys: Vec<String>,
    #[serde(default)]
    units: BTreeMap<String, Unit>,
    bins: BTreeMap<String, Vec<Bin>>,
}

/// Ordered `(key, bin)` column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    version: String,
    keys: Vec<KeySpec>,
    offsets: Vec<usize>,
    width: usize,
}

/// Result of normalizing one raw tag value.
#[derive(Debug, Clone, PartialEq)]
pub enum TagValue {
    /// Name of the matched categorical bin (possibly `other`).
    Canonical(String),
    /// Parsed value in the key's unit.
    Numeric(f64),
    Unrecognized,
}

impl FeatureSchema {
    pub fn new(version: impl Into<String>, keys: Vec<KeySpec>) -> Result<Self, SchemaError> {
        let mut seen = BTreeSet::new();
        for key in &keys {
            if !seen.insert(key.name.as_str()) {
                return Err(SchemaError::DuplicateKey(key.name.clone()));
            }
            validate_key(key)?;
        }
        let mut offsets = Vec::with_capacity(keys.len());
        let mut width = 0;
        for key in &keys {
            offsets.push(width);
            width += key.bins.len();
        }
        Ok(Self {
            version: version.into(),
            keys,
            offsets,
            width,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let file: SchemaFile = serde_json::from_str(text)?;
        if let Some(extra) = file.bins.keys().find(|k| !file.keys.contains(k)) {
            return Err(SchemaError::UnknownKey(extra.clone()));
        }
        let keys = file
            .keys
            .iter()
            .map(|name| KeySpec {
                name: name.clone(),
                unit: file.units.get(name).copied().unwrap_or_default(),
                bins: file.bins.get(name).cloned().unwrap_or_default(),
            })
            .collect();
        Self::new(file.version, keys)
    }

    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            version: self.version.clone(),
            keys: self.keys.iter().map(|k| k.name.clone()).collect(),
            units: self
                .keys
                .iter()
                .filter(|k| k.unit != Unit::Categorical)
                .map(|k| (k.name.clone(), k.unit))
                .collect(),
            bins: self.keys.iter().map(|k| (k.name.clone(), k.bins.clone())).collect(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn keys(&self) -> &[KeySpec] {
        &self.keys
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn key_index(&self, key: &str) -> Option<usize> {
        self.keys.iter().position(|k| k.name == key)
    }

    /// Column range occupied by a key.
    pub fn key_columns(&self, key_index: usize) -> std::ops::Range<usize> {
        let start = self.offsets[key_index];
        start..start + self.keys[key_index].bins.len()
    }

    pub fn column(&self, key: &str, bin: &str) -> Option<usize> {
        let k = self.key_index(key)?;
        let b = self.keys[k].bins.iter().position(|b| b.name == bin)?;
        Some(self.offsets[k] + b)
    }

    /// `key:bin` labels in column order.
    pub fn column_names(&self) -> Vec<String> {
        self.keys
            .iter()
            .flat_map(|k| k.bins.iter().map(move |b| format!("{}:{}", k.name, b.name)))
            .collect()
    }

    /// Key index of every column.
    pub fn column_keys(&self) -> Vec<usize> {
        self.keys
            .iter()
            .enumerate()
            .flat_map(|(i, k)| std::iter::repeat_n(i, k.bins.len()))
            .collect()
    }

    /// Normalizes a raw value of `key`. Keys outside the schema are unrecognized.
    pub fn normalize_tag(&self, key: &str, raw: &str) -> TagValue {
        let Some(spec) = self.key_index(key).map(|i| &self.keys[i]) else {
            return TagValue::Unrecognized;
        };
        let value = raw.trim().to_lowercase();
        if let Some(bin) = spec.bins.iter().find(|b| b.matches(&value)) {
            return TagValue::Canonical(bin.name.clone());
        }
        match spec.unit {
            Unit::Categorical => match spec.other_index() {
                Some(_) => TagValue::Canonical(OTHER_BIN.to_string()),
                None => TagValue::Unrecognized,
            },
            unit => match parse_numeric(unit, &value) {
                Some(x) if x > 0.0 => TagValue::Numeric(x),
                _ => TagValue::Unrecognized,
            },
        }
    }

    /// Bin index within `key` selected by a raw value, if any.
    pub fn bin_of(&self, key: &str, raw: &str) -> Option<usize> {
        let spec = &self.keys[self.key_index(key)?];
        match self.normalize_tag(key, raw) {
            TagValue::Canonical(name) => spec.bins.iter().position(|b| b.name == name),
            TagValue::Numeric(x) => spec
                .bins
                .iter()
                .position(|b| b.contains(x))
                .or_else(|| spec.other_index()),
            TagValue::Unrecognized => None,
        }
    }

    pub fn encode_tags(&self, tags: &BTreeMap<String, String>) -> Vec<u8> {
        let mut bits = vec![0u8; self.width];
        for (k, spec) in self.keys.iter().enumerate() {
            if let Some(raw) = tags.get(&spec.name) {
                if let Some(b) = self.bin_of(&spec.name, raw) {
                    bits[self.offsets[k] + b] = 1;
                }
            }
        }
        bits
    }
}

fn validate_key(key: &KeySpec) -> Result<(), SchemaError> {
    if key.bins.is_empty() {
        return Err(SchemaError::NoBins(key.name.clone()));
    }
    let mut names = BTreeSet::new();
    for (i, bin) in key.bins.iter().enumerate() {
        if !names.insert(bin.name.as_str()) {
            return Err(SchemaError::DuplicateBin {
                key: key.name.clone(),
                bin: bin.name.clone(),
            });
        }
        if bin.is_other() && i + 1 != key.bins.len() {
            return Err(SchemaError::OtherNotLast(key.name.clone()));
        }
    }
    let intervals: Vec<&Bin> = key.bins.iter().filter(|b| b.is_interval()).collect();
    if !intervals.is_empty() && key.unit == Unit::Categorical {
        return Err(SchemaError::IntervalWithoutUnit { key: key.name.clone() });
    }
    let mut previous_hi: Option<f64> = None;
    for (i, bin) in intervals.iter().enumerate() {
        let bad = || SchemaError::BadInterval {
            key: key.name.clone(),
            bin: bin.name.clone(),
        };
        let lo = bin.lo.ok_or_else(bad)?;
        match bin.hi {
            Some(hi) if hi <= lo => return Err(bad()),
            None if i + 1 != intervals.len() => return Err(bad()),
            _ => {}
        }
        if previous_hi.is_some_and(|p| lo < p) {
            return Err(bad());
        }
        previous_hi = bin.hi;
    }
    Ok(())
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn parse_numeric(unit: Unit, value: &str) -> Option<f64> {
    let x = match unit {
        Unit::Categorical => return None,
        Unit::SpeedKmh => {
            if let Some(mph) = value.strip_suffix("mph") {
                round_half_up(mph.trim().parse::<f64>().ok()? * MPH_TO_KMH)
            } else {
                let v = ["km/h", "kmh", "kph"]
                    .iter()
                    .find_map(|s| value.strip_suffix(s))
                    .unwrap_or(value);
                round_half_up(v.trim().parse::<f64>().ok()?)
            }
        }
        Unit::Meters => {
            let v = value.strip_suffix('m').unwrap_or(value).trim().replace(',', ".");
            round_half_up(v.parse::<f64>().ok()?)
        }
        Unit::Count => value.parse::<u32>().ok()? as f64,
    };
    x.is_finite().then_some(x)
}

/// Binary feature vector of one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub segment_id: String,
    pub bits: Vec<u8>,
}

impl FeatureVector {
    pub fn as_reals<T: crate::Scalar>(&self) -> Vec<T> {
        self.bits.iter().map(|&b| if b == 1 { T::one() } else { T::zero() }).collect()
    }
}

pub fn encode_segment(seg: &RoadSegment, schema: &FeatureSchema) -> FeatureVector {
    FeatureVector {
        segment_id: seg.id.clone(),
        bits: schema.encode_tags(&seg.tags),
    }
}

/// The pinned 88-column schema.
pub fn default_schema() -> FeatureSchema {
    let cats = |names: &[&str]| -> Vec<Bin> {
        let mut bins: Vec<Bin> = names.iter().map(|n| Bin::category(n, &[])).collect();
        bins.push(Bin::other());
        bins
    };
    let speed = {
        let mut bins: Vec<Bin> = (1..=12)
            .map(|i| {
                let centre = 10.0 * i as f64;
                Bin::interval(&format!("{}", 10 * i), if i == 1 { 0.0 } else { centre - 5.0 }, Some(centre + 5.0))
            })
            .collect();
        bins[0].aliases.push("walk".into());
        bins.push(Bin::other());
        bins
    };
    let lanes = {
        let mut bins: Vec<Bin> = (1..=7)
            .map(|i| Bin::interval(&i.to_string(), i as f64 - 0.5, Some(i as f64 + 0.5)))
            .collect();
        bins.push(Bin::interval("8+", 7.5, None));
        bins
    };
    let width = {
        let mut bins: Vec<Bin> = (1..=12)
            .map(|i| Bin::interval(&i.to_string(), i as f64 - 0.5, Some(i as f64 + 0.5)))
            .collect();
        bins.push(Bin::other());
        bins
    };
    let keys = vec![
        KeySpec {
            name: "oneway".into(),
            unit: Unit::Categorical,
            bins: vec![
                Bin::category("yes", &["true", "1"]),
                Bin::category("no", &["false", "0"]),
                Bin::category("reversed", &["-1", "reverse"]),
            ],
        },
        KeySpec {
            name: "highway".into(),
            unit: Unit::Categorical,
            bins: cats(&[
                "motorway",
                "trunk",
                "primary",
                "secondary",
                "tertiary",
                "unclassified",
                "residential",
                "living_street",
                "service",
                "road",
                "motorway_link",
                "trunk_link",
                "primary_link",
                "secondary_link",
                "tertiary_link",
                "track",
            ]),
        },
        KeySpec {
            name: "surface".into(),
            unit: Unit::Categorical,
            bins: cats(&[
                "asphalt",
                "paved",
                "concrete",
                "concrete_plates",
                "paving_stones",
                "sett",
                "cobblestone",
                "unpaved",
                "compacted",
                "gravel",
                "fine_gravel",
                "ground",
                "dirt",
                "grass",
                "sand",
            ]),
        },
        KeySpec {
            name: "maxspeed".into(),
            unit: Unit::SpeedKmh,
            bins: speed,
        },
        KeySpec {
            name: "lanes".into(),
            unit: Unit::Count,
            bins: lanes,
        },
        KeySpec {
            name: "bridge".into(),
            unit: Unit::Categorical,
            bins: cats(&["yes", "viaduct", "movable"]),
        },
        KeySpec {
            name: "junction".into(),
            unit: Unit::Categorical,
            bins: cats(&["roundabout", "circular", "jughandle"]),
        },
        KeySpec {
            name: "access".into(),
            unit: Unit::Categorical,
            bins: cats(&["yes", "permissive", "no", "private", "destination"]),
        },
        KeySpec {
            name: "tunnel".into(),
            unit: Unit::Categorical,
            bins: cats(&["yes", "building_passage", "culvert"]),
        },
        KeySpec {
            name: "width".into(),
            unit: Unit::Meters,
            bins: width,
        },
    ];
    FeatureSchema::new("1", keys).expect("default schema is valid")
}

fn cached_default() -> &'static FeatureSchema {
    static DEFAULT: OnceLock<FeatureSchema> = OnceLock::new();
    DEFAULT.get_or_init(default_schema)
}

/// Normalizes a raw value against the default schema.
pub fn normalize_tag(key: &str, raw: &str) -> TagValue {
    cached_default().normalize_tag(key, raw)
}

/// Highway values of the default schema, minus `other`.
pub fn default_driveable_set() -> BTreeSet<String> {
    let schema = cached_default();
    let highway = &schema.keys()[schema.key_index("highway").expect("highway key")];
    highway
        .bins
        .iter()
        .filter(|b| !b.is_other())
        .map(|b| b.name.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyCoverage {
    pub key: String,
    pub present: usize,
    pub share: f64,
    /// Raw values by descending count, ties by value.
    pub values: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagStats {
    pub segments: usize,
    pub keys: Vec<KeyCoverage>,
}

impl TagStats {
    pub fn share(&self, key: &str) -> Option<f64> {
        self.keys.iter().find(|k| k.key == key).map(|k| k.share)
    }
}

/// Per-key occurrence share and value frequencies for the ten default keys.
pub fn tag_coverage_stats(net: &RoadNetwork) -> Result<TagStats, SchemaError> {
    tag_coverage_stats_for(net, &DEFAULT_KEYS)
}

pub fn tag_coverage_stats_for(net: &RoadNetwork, keys: &[&str]) -> Result<TagStats, SchemaError> {
    if net.is_empty() {
        return Err(SchemaError::EmptyNetwork);
    }
    let n = net.len();
    let keys = keys
        .iter()
        .map(|&key| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for seg in net.segments() {
                if let Some(v) = seg.tag(key) {
                    *counts.entry(v).or_default() += 1;
                }
            }
            let present = counts.values().sum();
            let mut values: Vec<(String, usize)> = counts.into_iter().map(|(v, c)| (v.to_string(), c)).collect();
            values.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            KeyCoverage {
                key: key.to_string(),
                present,
                share: present as f64 / n as f64,
                values,
            }
        })
        .collect();
    Ok(TagStats { segments: n, keys })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn default_width_and_key_order() {
        let s = default_schema();
        assert_eq!(s.width(), 88);
        let names: Vec<&str> = s.keys().iter().map(|k| k.name.as_str()).collect();
        assert_eq!(names, DEFAULT_KEYS);
        let counts: Vec<usize> = s.keys().iter().map(|k| k.bins.len()).collect();
        assert_eq!(counts, [3, 17, 16, 13, 8, 4, 4, 6, 4, 13]);
        assert_eq!([3, 17, 16, 13, 8, 4, 4, 6, 4, 13].iter().sum::<usize>(), 88);
    }

    /// Nearest speed bin centre by brute force, ties toward the higher bin.
    fn nearest_speed_bin(kmh: f64) -> Option<String> {
        if kmh >= 125.0 {
            return None;
        }
        let mut best = (f64::INFINITY, 0);
        for c in (10..=120).step_by(10) {
            let d = (kmh - c as f64).abs();
            if d <= best.0 {
                best = (d, c);
            }
        }
        Some(best.1.to_string())
    }

    #[test]
    fn speed_bins_agree_with_nearest_centre() {
        let s = default_schema();
        for kmh in 1..200 {
            let raw = kmh.to_string();
            let got = s.bin_of("maxspeed", &raw).map(|b| s.keys()[3].bins[b].name.clone());
            let want = nearest_speed_bin(kmh as f64).unwrap_or_else(|| OTHER_BIN.to_string());
            assert_eq!(got.as_deref(), Some(want.as_str()), "{kmh} km/h");
        }
    }

    #[test]
    fn mph_converts_and_rounds() {
        assert_eq!(normalize_tag("maxspeed", "30 mph"), TagValue::Numeric(48.0));
        let s = default_schema();
        let bin = s.bin_of("maxspeed", "30 mph").unwrap();
        assert_eq!(s.keys()[3].bins[bin].name, "50");
        assert_eq!(normalize_tag("maxspeed", "20mph"), TagValue::Numeric(32.0));
        assert_eq!(s.bin_of("maxspeed", "walk"), Some(0));
    }

    #[test]
    fn numeric_failures_are_unrecognized() {
        for (k, v) in [("maxspeed", "none"), ("maxspeed", "0"), ("maxspeed", "-30"), ("width", "wide"), ("lanes", "0"), ("lanes", "2;3"), ("width", "0.2")] {
            assert_eq!(normalize_tag(k, v), TagValue::Unrecognized, "{k}={v}");
        }
    }

    #[test]
    fn width_parsing() {
        assert_eq!(normalize_tag("width", "5"), TagValue::Numeric(5.0));
        assert_eq!(normalize_tag("width", "5,5 m"), TagValue::Numeric(6.0));
        assert_eq!(normalize_tag("width", "4.4m"), TagValue::Numeric(4.0));
        let s = default_schema();
        assert_eq!(s.column("width", "5"), s.bin_of("width", "5").map(|b| s.key_columns(9).start + b));
        assert_eq!(s.bin_of("width", "30"), Some(12));
    }

    #[test]
    fn oneway_table() {
        assert_eq!(normalize_tag("oneway", "no"), TagValue::Canonical("no".into()));
        assert_eq!(normalize_tag("oneway", "True"), TagValue::Canonical("yes".into()));
        assert_eq!(normalize_tag("oneway", "-1"), TagValue::Canonical("reversed".into()));
        assert_eq!(normalize_tag("oneway", "alternating"), TagValue::Unrecognized);
    }

    #[test]
    fn unknown_category_goes_to_other() {
        assert_eq!(normalize_tag("surface", "Wood"), TagValue::Canonical("other".into()));
        assert_eq!(normalize_tag("lanes", "9"), TagValue::Numeric(9.0));
        let s = default_schema();
        assert_eq!(s.bin_of("lanes", "9"), Some(7));
    }

    #[test]
    fn empty_tags_encode_to_zeros() {
        let s = default_schema();
        assert_eq!(s.encode_tags(&BTreeMap::new()), vec![0; 88]);
    }

    #[test]
    fn two_tags_two_bits() {
        let s = default_schema();
        let bits = s.encode_tags(&tags(&[("oneway", "no"), ("highway", "residential"), ("name", "Main")]));
        // oneway occupies columns 0..3, highway 3..20 in listing order
        let set: Vec<usize> = bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect();
        assert_eq!(set, vec![1, 3 + 6]);
    }

    #[test]
    fn example_segment_sets_five_bits() {
        let s = default_schema();
        let bits = s.encode_tags(&tags(&[
            ("highway", "residential"),
            ("surface", "asphalt"),
            ("maxspeed", "50"),
            ("lanes", "2"),
            ("oneway", "no"),
        ]));
        let set: Vec<usize> = bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect();
        let want: Vec<usize> = [("oneway", "no"), ("highway", "residential"), ("surface", "asphalt"), ("maxspeed", "50"), ("lanes", "2")]
            .iter()
            .map(|(k, b)| s.column(k, b).unwrap())
            .collect();
        assert_eq!(set, want);
    }

    #[test]
    fn json_round_trip_keeps_columns() {
        let s = default_schema();
        let back = FeatureSchema::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.column_names(), s.column_names());
    }

    #[test]
    fn validation_rejects_bad_layouts() {
        let bad_other = KeySpec {
            name: "k".into(),
            unit: Unit::Categorical,
            bins: vec![Bin::other(), Bin::category("a", &[])],
        };
        assert!(matches!(FeatureSchema::new("x", vec![bad_other]), Err(SchemaError::OtherNotLast(_))));
        let overlap = KeySpec {
            name: "k".into(),
            unit: Unit::Count,
            bins: vec![Bin::interval("a", 0.0, Some(2.0)), Bin::interval("b", 1.0, Some(3.0))],
        };
        assert!(matches!(FeatureSchema::new("x", vec![overlap]), Err(SchemaError::BadInterval { .. })));
    }

    #[test]
    fn coverage_shares() {
        use crate::ingest::RoadSegment;
        let mk = |id: &str, t: &[(&str, &str)]| RoadSegment {
            id: id.into(),
            city: "c".into(),
            geometry: vec![(0.0, 0.0), (0.001, 0.0)],
            tags: tags(t),
        };
        let net = RoadNetwork::new(vec![
            mk("a", &[("surface", "asphalt"), ("highway", "residential")]),
            mk("b", &[("surface", "asphalt"), ("highway", "residential")]),
            mk("c", &[("highway", "primary")]),
            mk("d", &[]),
        ])
        .unwrap();
        let stats = tag_coverage_stats(&net).unwrap();
        assert_eq!(stats.share("surface"), Some(0.5));
        assert_eq!(stats.share("highway"), Some(0.75));
        let hw = stats.keys.iter().find(|k| k.key == "highway").unwrap();
        assert_eq!(hw.values, vec![("residential".to_string(), 2), ("primary".to_string(), 1)]);
        assert!(matches!(tag_coverage_stats(&RoadNetwork::default()), Err(SchemaError::EmptyNetwork)));
    }
}
