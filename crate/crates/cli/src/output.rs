//! CSV and JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use rydpump::protocols::Record;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// 12 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn record_header(observables: &[String]) -> Vec<String> {
    let mut h = vec!["time_us".to_string(), "cycle".into(), "segment".into()];
    h.extend(observables.iter().cloned());
    h.extend(["trace_error".to_string(), "hermiticity_error".into()]);
    h
}

pub fn record_row(r: &Record) -> Vec<String> {
    let mut row = vec![fmt_f64(r.time * 1e6), r.cycle.to_string(), r.segment.clone()];
    row.extend(r.values.iter().map(|v| fmt_f64(*v)));
    row.extend([fmt_f64(r.trace_error), fmt_f64(r.hermiticity_error)]);
    row
}

pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Metadata block embedding the exact config.
pub fn metadata(command: &str, cfg: &RunConfig) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_sha256": cfg.sha256(),
        "config": cfg.to_value(),
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn out_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
