//! Configuration-driven front end: reads a JSON run configuration, runs one
//! pipeline of `qgraph-core` and emits a JSON report and CSV plot data.

pub mod config;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub use config::{Command, Format, RunConfig};
pub use run::{run, Outcome, Report, RunError, Table};

/// Writes `<command>.json` and/or `<command>.csv` into `out`, returning the
/// paths written.
pub fn write_outputs(outcome: &Outcome, out: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let stem = outcome.report.command.to_string();
    let mut written = vec![];
    if matches!(format, Format::Json | Format::Both) {
        let path = out.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&outcome.report)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    if matches!(format, Format::Csv | Format::Both) {
        let path = out.join(format!("{stem}.csv"));
        fs::write(&path, outcome.table.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
