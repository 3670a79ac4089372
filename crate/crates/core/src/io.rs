//! CSV and TOML persistence of run results.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::runner::{EventRecord, InvariantReport, SimResult, Summary, TraceRow};
use crate::triggers::DerivedConstants;

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_events(path: &Path, rows: &[EventRecord]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_summaries(path: &Path, rows: &[Summary]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_summaries(path: &Path) -> Result<Vec<Summary>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct Report<'a> {
    summary: Summary,
    sampling_period_admissible: bool,
    breaches: Vec<String>,
    constants: &'a DerivedConstants,
    kernel_constants: &'a KernelConstants,
    invariants: &'a InvariantReport,
}

/// Derived constants, invariant outcomes and the summary row as TOML.
pub fn report_toml(result: &SimResult) -> Result<String> {
    let report = Report {
        summary: result.summary(),
        sampling_period_admissible: result.sampling_period_admissible,
        breaches: result.invariants.breaches(),
        constants: &result.constants,
        kernel_constants: &result.kernel_constants,
        invariants: &result.invariants,
    };
    toml::to_string(&report).map_err(|e| Error::Parse(format!("report: {e}")))
}

/// Directory name of a run below the scenario directory.
pub fn run_dir_name(result: &SimResult) -> String {
    format!("{}_c{}", result.controller, result.c)
}

/// Writes `trace.csv`, `events.csv`, `summary.csv` and `report.toml` into
/// `dir`, creating it if needed.
pub fn write_run(dir: &Path, result: &SimResult) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    write_trace(&dir.join("trace.csv"), &result.trace)?;
    write_events(&dir.join("events.csv"), &result.events)?;
    write_summaries(&dir.join("summary.csv"), &[result.summary()])?;
    std::fs::write(dir.join("report.toml"), report_toml(result)?)?;
    Ok(dir.to_path_buf())
}
