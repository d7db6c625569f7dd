//! One-parameter sweeps over a base configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::report::{run_experiment, write_report, RunError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("`{0}` does not name an object field in the configuration")]
    Param(String),
    #[error("no values to sweep")]
    NoValues,
    #[error("{param}={value}: {source}")]
    Config {
        param: String,
        value: String,
        source: ConfigError,
    },
    #[error("{param}={value}: {source}")]
    Run {
        param: String,
        value: String,
        source: RunError,
    },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub complete: bool,
    pub fct_max_ns: Option<u64>,
    pub fct_p50_ns: Option<u64>,
    pub fct_p99_ns: Option<u64>,
    pub makespan_ns: Option<u64>,
    pub ideal_ns: u64,
    pub ideal_ratio: Option<f64>,
    pub retransmitted_bytes: u64,
    pub trims: u64,
    pub drops: u64,
}

/// Sets the dotted `param` (e.g. `network.cc.fi`) in `doc`, creating
/// intermediate objects as needed.
pub fn set_param(doc: &mut Value, param: &str, value: Value) -> Result<(), SweepError> {
    let bad = || SweepError::Param(param.to_string());
    let mut keys = param.split('.').peekable();
    let mut cur = doc;
    while let Some(k) = keys.next() {
        if k.is_empty() {
            return Err(bad());
        }
        let obj = cur.as_object_mut().ok_or_else(bad)?;
        if keys.peek().is_none() {
            obj.insert(k.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(k.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(bad())
}

/// Parses a CLI value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs the base config once per value, writing each report into
/// `out/<param>=<value>/` and a `sweep.csv` overview into `out`.
pub fn run_sweep(
    config_path: &Path,
    param: &str,
    values: &[Value],
    out: &Path,
) -> Result<Vec<SweepRow>, SweepError> {
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    let text = fs::read_to_string(config_path).map_err(|source| SweepError::Io {
        path: config_path.to_path_buf(),
        source,
    })?;
    let base: Value = serde_json::from_str(&text).map_err(|source| SweepError::Json {
        path: config_path.to_path_buf(),
        source,
    })?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let value = label(v);
        let mut doc = base.clone();
        set_param(&mut doc, param, v.clone())?;
        let cfg_err = |source| SweepError::Config {
            param: param.to_string(),
            value: value.clone(),
            source,
        };
        let cfg = RunConfig::from_json(&doc.to_string(), config_path).map_err(cfg_err)?;
        let prepared = cfg.prepare(base_dir).map_err(cfg_err)?;
        let run_err = |source| SweepError::Run {
            param: param.to_string(),
            value: value.clone(),
            source,
        };
        let report = run_experiment(&prepared).map_err(run_err)?;
        let dir = out.join(format!("{param}={value}"));
        write_report(&report, &dir).map_err(run_err)?;
        let s = &report.summary.run;
        rows.push(SweepRow {
            value,
            complete: s.complete,
            fct_max_ns: s.fct.fct_max_ns,
            fct_p50_ns: s.fct.fct_p50_ns,
            fct_p99_ns: s.fct.fct_p99_ns,
            makespan_ns: s.fct.makespan_ns,
            ideal_ns: s.ideal_ns,
            ideal_ratio: s.ideal_ratio,
            retransmitted_bytes: s.fct.retransmitted_bytes,
            trims: s.trims,
            drops: s.drops,
        });
    }
    let path = out.join("sweep.csv");
    let csv_err = |source| SweepError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for r in &rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| SweepError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(rows)
}
