//! CSV and JSON exports of simulation results.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::escape::EscapeRecord;
use super::stats::Histogram2d;

/// Writes `t,name1,name2,...` rows.
pub fn write_series<W: Write>(out: W, names: &[String], times: &[f64], rows: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("t").chain(names.iter().map(String::as_str)))?;
    for (t, row) in times.iter().zip(rows) {
        w.write_record(std::iter::once(t).chain(row).map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path_id,escape_time,escaped,status` rows; status is one of
/// `escaped`, `censored`, `diverged`.
pub fn write_escape_table<W: Write>(out: W, records: &[EscapeRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "escape_time", "escaped", "status"])?;
    for r in records {
        let status = if r.diverged {
            "diverged"
        } else if r.escaped {
            "escaped"
        } else {
            "censored"
        };
        w.write_record([
            r.path.to_string(),
            r.time.to_string(),
            r.escaped.to_string(),
            status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar describing a histogram export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub bins: [usize; 2],
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub window: f64,
    /// Exported counts are `raw * normalization / total_raw`.
    pub normalization: f64,
    pub total_raw: u64,
    /// Cells whose normalized count is below this are omitted.
    pub threshold: f64,
    pub escaped_paths: usize,
    pub seed: u64,
    pub dt: f64,
}

/// Writes `x_bin_center,y_bin_center,count` for cells whose normalized count
/// reaches `threshold`. Returns the number of rows written.
pub fn write_histogram<W: Write>(out: W, h: &Histogram2d, normalization: f64, threshold: f64) -> csv::Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_bin_center", "y_bin_center", "count"])?;
    let total = h.total();
    let mut rows = 0;
    for ix in 0..h.nx {
        for iy in 0..h.ny {
            let raw = h.count(ix, iy);
            if raw == 0 {
                continue;
            }
            let c = raw as f64 * normalization / total as f64;
            if c < threshold {
                continue;
            }
            w.write_record([h.x_center(ix).to_string(), h.y_center(iy).to_string(), c.to_string()])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
