//! Artifact files: CSV with a header row and shortest round-trip formatting of
//! reals, and pretty JSON with keys in declaration order.

use std::path::Path;

use serde::Serialize;

use crate::construction::ClockSample;
use crate::counterexample::CurveRow;
use crate::error::{Error, Result};
use crate::integrator::{ImpactEvent, SolutionTrace};
use crate::paths::SamplePath;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes `rows` under `header`. Reals use Rust's `Display`, which is the
/// shortest string that parses back to the same `f64`.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Precondition(format!("row of {} fields under a header of {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Io(format!("bad number `{f}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub const TRACE_HEADER: [&str; 5] = ["t", "X", "V", "A", "B"];
pub const EVENTS_HEADER: [&str; 3] = ["time", "v_in", "jump"];

pub fn write_trace_csv(path: &Path, trace: &SolutionTrace) -> Result<()> {
    let g = trace.grid();
    write_csv(
        path,
        &TRACE_HEADER,
        (0..trace.x.len()).map(|k| vec![g.time(k), trace.x.at(k), trace.v.at(k), trace.a.at(k), trace.b.at(k)]),
    )
}

pub fn write_events_csv(path: &Path, events: &[ImpactEvent]) -> Result<()> {
    write_csv(path, &EVENTS_HEADER, events.iter().map(|e| vec![e.time, e.v_in, e.jump]))
}

/// The construction on its clock grid, in the trace layout.
pub fn write_clock_csv(path: &Path, s: &ClockSample) -> Result<()> {
    write_csv(path, &TRACE_HEADER, (0..s.x.len()).map(|k| vec![s.grid.time(k), s.x[k], s.v[k], s.a[k], s.b[k]]))
}

pub fn write_path_csv(path: &Path, name: &str, p: &SamplePath) -> Result<()> {
    write_csv(path, &["t", name], (0..p.len()).map(|k| vec![p.time(k), p.at(k)]))
}

pub const CURVES_HEADER: [&str; 7] = ["u", "alpha", "beta", "phi", "F", "X_alpha", "X_beta"];

pub fn write_curves_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_csv(path, &CURVES_HEADER, rows.iter().map(|r| vec![r.u, r.alpha, r.beta, r.phi, r.force, r.x_alpha, r.x_beta]))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = to_json(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
