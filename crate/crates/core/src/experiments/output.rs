//! Curve files: CSV with a JSON sidecar, written atomically.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::CurveResult;
use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// `<name>.csv` plus `<name>.json` metadata.
    #[default]
    Csv,
    /// Everything in `<name>.json`.
    Json,
}

pub fn curve_csv(curve: &CurveResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(e.to_string());
    w.write_record(["x", "y", "stderr", "n_trials"]).map_err(err)?;
    for p in &curve.points {
        w.write_record([
            p.x.to_string(),
            p.y.to_string(),
            p.stderr.to_string(),
            p.n_trials.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn existing_hash(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.pointer("/meta/spec_hash")
        .and_then(|h| h.as_str())
        .map(str::to_string)
}

/// Writes the curve under `dir`; refuses to replace results produced from a
/// different spec unless `force` is set. Returns the written paths.
pub fn write_curve(curve: &CurveResult, dir: &Path, format: OutputFormat, force: bool) -> Result<Vec<PathBuf>> {
    let json_path = dir.join(format!("{}.json", curve.name));
    if !force {
        if let Some(h) = existing_hash(&json_path) {
            if h != curve.meta.spec_hash {
                return Err(Error::OutputCollision(json_path.display().to_string()));
            }
        }
    }
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let csv_path = dir.join(format!("{}.csv", curve.name));
            write_atomic(&csv_path, &curve_csv(curve)?)?;
            written.push(csv_path);
            let mut side = curve.clone();
            side.points.clear();
            let body = serde_json::to_vec_pretty(&side).map_err(|e| Error::Config(e.to_string()))?;
            write_atomic(&json_path, &body)?;
        }
        OutputFormat::Json => {
            let body = serde_json::to_vec_pretty(curve).map_err(|e| Error::Config(e.to_string()))?;
            write_atomic(&json_path, &body)?;
        }
    }
    written.push(json_path);
    Ok(written)
}
