//! Run directories.
//!
//! Each run is written to its own directory:
//!
//! | file | content |
//! |------|---------|
//! | `trajectory.csv` | `day,group,S,I,R,D,applied_u`, one row per day and group |
//! | `metrics.json` | [`ScenarioMetrics`] |
//! | `mpc.jsonl` | one [`MpcDayRecord`](crate::result::MpcDayRecord) per solve (empty for other policies) |
//! | `result.json` | the full [`ScenarioResult`], read back by [`read_run`] |
//!
//! `applied_u` on day `n` is the dose administered that day; the last day has
//! no dose. All numbers are written in shortest round-trip form, so identical
//! runs produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::result::ScenarioResult;
use crate::scenario::metrics::{compute_metrics, ScenarioMetrics};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MPC_LOG_FILE: &str = "mpc.jsonl";
pub const RESULT_FILE: &str = "result.json";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse { path: path.to_path_buf(), message: e.to_string() }
}

pub fn write_trajectory_csv(run: &ScenarioResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::Parse { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(["day", "group", "S", "I", "R", "D", "applied_u"]).map_err(csv_err)?;
    for (day, state) in run.trajectory.states.iter().enumerate() {
        let dose = run.controls.get(day);
        for k in 0..state.n_groups() {
            let u = dose.map_or(0.0, |u| u[k]);
            w.write_record(&[
                day.to_string(),
                k.to_string(),
                state.s[k].to_string(),
                state.i[k].to_string(),
                state.r[k].to_string(),
                state.d[k].to_string(),
                u.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| json_error(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_mpc_log(run: &ScenarioResult, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for rec in &run.mpc_log {
        serde_json::to_writer(&mut w, rec).map_err(|e| json_error(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes all run files into `dir`, creating it if needed, and returns the metrics.
pub fn write_run(run: &ScenarioResult, dir: &Path) -> Result<ScenarioMetrics> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = compute_metrics(run)?;
    write_trajectory_csv(run, &dir.join(TRAJECTORY_FILE))?;
    write_json(&metrics, &dir.join(METRICS_FILE))?;
    write_mpc_log(run, &dir.join(MPC_LOG_FILE))?;
    write_json(run, &dir.join(RESULT_FILE))?;
    Ok(metrics)
}

pub fn write_json_file<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    write_json(value, path)
}

/// Reads a run written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<ScenarioResult> {
    let path = dir.join(RESULT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| json_error(&path, e))
}
