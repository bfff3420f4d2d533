//! Report emission: fixed-name artifacts under an output directory.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sdsim_core::metrics::{daily_csv, heatmap_csv, report_csv};
use sdsim_core::{heatmap, HeatmapSpec, RunOutput};
use serde::Serialize;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Write one run's artifacts: `events.log`, `report.json`, `report.csv`,
/// `heatmap.csv`, `daily.csv`. The manifest becomes `report.json` and
/// should carry the resolved configuration alongside the metrics.
pub fn write_run<M: Serialize>(
    dir: &Path,
    out: &RunOutput,
    spec: &HeatmapSpec,
    manifest: &M,
) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;

    let log_path = dir.join("events.log");
    let mut log_file = File::create(&log_path)
        .with_context(|| format!("cannot write {}", log_path.display()))?;
    out.log.write_to(&mut log_file)?;
    log_file.flush()?;

    let json = serde_json::to_string_pretty(manifest)?;
    write_file(dir, "report.json", &json)?;
    write_file(dir, "report.csv", &report_csv(&out.report))?;
    write_file(dir, "daily.csv", &daily_csv(&out.report))?;
    let grid = heatmap(&out.log, spec)?;
    write_file(dir, "heatmap.csv", &heatmap_csv(&grid))?;
    Ok(())
}
