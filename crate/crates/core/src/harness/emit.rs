use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ExperimentReport;
use crate::algorithms::RunResult;
use crate::error::{Error, Result};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV rows `t,x1,x2,x3,f_value,gas_distance,certified` with 1-based `t`.
/// Coordinates past the third are left out; missing ones are empty.
pub fn write_csv(run: &RunResult) -> String {
    let mut out = String::from("t,x1,x2,x3,f_value,gas_distance,certified\n");
    for (i, x) in run.trajectory.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for j in 0..3 {
            out.push(',');
            if let Some(v) = x.get(j) {
                out.push_str(&num(*v));
            }
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            num(run.values[i]),
            num(run.distances[i]),
            run.certified[i]
        );
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Writes `trajectory.csv`, `report.json` and, when present, `transcript.json`
/// and `function.json` into `dir`, overwriting earlier files.
pub fn emit_results(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write(dir.join("trajectory.csv"), &write_csv(&report.run))?,
        write(dir.join("report.json"), &to_json(report))?,
    ];
    if let Some(t) = &report.transcript {
        written.push(write(dir.join("transcript.json"), &t.to_json())?);
    }
    if let Some(f) = &report.function {
        written.push(write(dir.join("function.json"), &f.to_json())?);
    }
    Ok(written)
}
