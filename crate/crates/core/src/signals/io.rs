//! Single-column CSV (`value` header) plus a JSON sidecar carrying the
//! sampling metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::persist::{write_atomic, write_json_atomic};
use crate::{Error, Result};

/// Sidecar metadata stored next to a series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub dt: f64,
    pub origin_index: i64,
    pub seed: Option<u64>,
    /// Generator parameters, kept opaque so any generator can be recorded.
    pub params: serde_json::Value,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".json");
    csv_path.with_file_name(name)
}

/// Writes `series` to `path` and its metadata to `path.json`.
pub fn write_series(path: &Path, series: &TimeSeries, seed: Option<u64>, params: serde_json::Value) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["value"])?;
    for v in series.values() {
        // `{:?}` gives the shortest representation that round-trips exactly
        w.write_record([format!("{v:?}")])?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)?;
    let meta = SeriesMeta { dt: series.dt(), origin_index: series.origin_index(), seed, params };
    write_json_atomic(&sidecar_path(path), &meta)
}

/// Reads a series written by [`write_series`]. A missing sidecar means `dt = 1`.
pub fn read_series_csv(path: &Path) -> Result<(TimeSeries, Option<SeriesMeta>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "value")
        .ok_or_else(|| Error::Parameter(format!("{}: no `value` column", path.display())))?;
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Parameter(format!("{}: row {}: `{field}` is not a number", path.display(), i + 1)))?;
        values.push(v);
    }
    let side = sidecar_path(path);
    let meta: Option<SeriesMeta> =
        if side.exists() { Some(serde_json::from_slice(&std::fs::read(&side)?)?) } else { None };
    let series = match &meta {
        Some(m) => TimeSeries::with_origin(values, m.dt, m.origin_index)?,
        None => TimeSeries::new(values, 1.0)?,
    };
    Ok((series, meta))
}
