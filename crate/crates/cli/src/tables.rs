//! Flat-file readers and writers for the workspace artifacts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use hexembed::grid::{CellAssignment, CellId};
use hexembed::{RegionEmbedding, RoadNetwork};

use crate::error::CliError;

/// Binary feature rows by segment id.
pub type FeatureRows = BTreeMap<String, Vec<u8>>;
pub type CellInts = BTreeMap<CellId, Vec<i64>>;

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(open(path)?))
}

fn bad(path: &Path, row: usize, what: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{} row {}: {what}", path.display(), row + 1))
}

fn parse<T: FromStr>(path: &Path, row: usize, field: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e| bad(path, row, format!("`{field}`: {e}")))
}

/// Buffered CSV writer; floats are written with `Display`, which round-trips.
pub struct Table {
    inner: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<Self, CliError> {
        let mut inner = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(header.iter().map(AsRef::as_ref))?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn prefixed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

pub fn read_roads(path: &Path) -> Result<RoadNetwork, CliError> {
    RoadNetwork::read_jsonl(BufReader::new(open(path)?)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `segment_id,<col>...` with 0/1 cells. Returns the header columns and rows by id.
pub fn read_features(path: &Path) -> Result<(Vec<String>, FeatureRows), CliError> {
    let mut rdr = reader(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bits = rec
            .iter()
            .skip(1)
            .map(|f| match f {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(bad(path, i, format!("feature value `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        if bits.len() != columns.len() {
            return Err(bad(path, i, "wrong number of fields"));
        }
        rows.insert(rec[0].to_string(), bits);
    }
    Ok((columns, rows))
}

/// `id,<v>...` real-valued rows keyed by the first column.
pub fn read_vectors(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut rdr = reader(path)?;
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec.iter().skip(1).map(|f| parse(path, i, f)).collect::<Result<Vec<f64>, _>>()?;
        rows.insert(rec[0].to_string(), values);
    }
    Ok(rows)
}

/// `segment_id,cell_address` incidence rows.
pub fn read_assignment(path: &Path, resolution: u8) -> Result<CellAssignment, CliError> {
    let mut rdr = reader(path)?;
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(bad(path, i, "expected segment_id,cell_address"));
        }
        pairs.push((rec[0].to_string(), parse::<CellId>(path, i, &rec[1])?));
    }
    CellAssignment::from_incidences(resolution, pairs).map_err(CliError::data)
}

/// `cell_address,v0..,segment_count`.
pub fn read_regions(path: &Path) -> Result<BTreeMap<CellId, RegionEmbedding>, CliError> {
    let mut rdr = reader(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(bad(path, i, "too few fields"));
        }
        let cell: CellId = parse(path, i, &rec[0])?;
        let last = rec.len() - 1;
        let values = (1..last).map(|j| parse(path, i, &rec[j])).collect::<Result<Vec<f64>, _>>()?;
        let segment_count = parse(path, i, &rec[last])?;
        out.insert(cell, RegionEmbedding { cell, values, segment_count });
    }
    Ok(out)
}

/// `cell_address,<int>...` rows, e.g. cluster labels or colours.
pub fn read_cell_ints(path: &Path) -> Result<(Vec<String>, CellInts), CliError> {
    let mut rdr = reader(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell: CellId = parse(path, i, &rec[0])?;
        let values = rec.iter().skip(1).map(|f| parse(path, i, f)).collect::<Result<Vec<i64>, _>>()?;
        out.insert(cell, values);
    }
    Ok((columns, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hexembed::grid::cell_of_point;

    #[test]
    fn region_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let cell = cell_of_point(17.0, 51.1, 9).unwrap();
        let values = vec![0.1 + 0.2, -1e-300, 12345.678901234567];
        let mut t = Table::create(&path, &["cell_address", "v0", "v1", "v2", "segment_count"]).unwrap();
        let mut row = vec![cell.to_string()];
        row.extend(values.iter().map(|v| v.to_string()));
        row.push("4".into());
        t.row(&row).unwrap();
        t.finish().unwrap();
        let back = read_regions(&path).unwrap();
        assert_eq!(back[&cell].values, values);
        assert_eq!(back[&cell].segment_count, 4);
    }

    #[test]
    fn non_binary_feature_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "segment_id,a,b\ns1,0,2\n").unwrap();
        assert!(matches!(read_features(&path), Err(CliError::Data(_))));
    }
}
