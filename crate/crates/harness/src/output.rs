//! Files written for an experiment: per-run CSV time series, two-column plot
//! data for `J(t)` and `K(t)`, and one JSON summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cnls_core::Record;

use crate::error::{HarnessError, Result};
use crate::experiment::Summary;

pub const CSV_HEADER: &str = "t,M,E,K,P,Q,G,J,Jprime,dt";

/// Shortest decimal that parses back to `x`; exponent form outside `[1e-5, 1e16)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn csv_table(record: &Record) -> String {
    let mut out = String::with_capacity(64 * (record.samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &record.samples {
        let r = &s.report;
        let row = [s.t, r.mass, r.energy, r.kinetic, r.potential, r.q, r.g, s.virial.j, s.virial.jprime, s.dt];
        let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn two_column(record: &Record, f: impl Fn(&cnls_core::solver::Sample<f64>) -> f64) -> String {
    let mut out = String::new();
    for s in &record.samples {
        writeln!(out, "{} {}", format_number(s.t), format_number(f(s))).expect("string write");
    }
    out
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes everything under `dir` (created if missing) and returns the paths written.
pub fn emit_outputs(records: &[Record], summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        write(dir.join(format!("run_{i:03}.csv")), &csv_table(rec), &mut written)?;
        write(dir.join(format!("run_{i:03}_J.dat")), &two_column(rec, |s| s.virial.j), &mut written)?;
        write(dir.join(format!("run_{i:03}_K.dat")), &two_column(rec, |s| s.report.kinetic), &mut written)?;
    }
    let mut json = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::Numerical(format!("summary is not serializable: {e}")))?;
    json.push('\n');
    write(dir.join("summary.json"), &json, &mut written)?;
    Ok(written)
}
