//! Result tables: comma-separated with a header row, plus a JSON sidecar
//! (`<table>.meta`) describing how the table was produced.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Meta { path: PathBuf, source: serde_json::Error },
}

/// One `(size, configuration)` cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem: String,
    pub size: usize,
    pub dim: usize,
    pub mask: String,
    pub adapt: String,
    pub sketch: f64,
    pub window: usize,
    pub alternation: usize,
    pub tol: f64,
    pub seed: u64,
    pub repetitions: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residual_evaluations: usize,
    pub final_relative_residual: Option<f64>,
    pub mixing_steps: usize,
    pub accepted_masks: usize,
    /// Mean wall time of `solve()`; empty when timing was not requested.
    pub wall_time_seconds: Option<f64>,
    /// Fastest converged configuration for its size (best-overall sweeps).
    pub best: bool,
    pub error: Option<String>,
}

/// Columns that legitimately differ between otherwise identical runs.
pub const TIMING_COLUMNS: &[&str] = &["wall_time_seconds"];

/// Provenance written next to every table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub tool: String,
    pub version: String,
    pub build_profile: String,
    pub command: String,
    pub seed: u64,
    /// Command-specific configuration (run spec, plan, benchmark options).
    pub config: serde_json::Value,
}

impl TableMeta {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: "aap".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            build_profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
            command: command.into(),
            seed,
            config,
        }
    }
}

/// `results.csv` -> `results.csv.meta`
pub fn meta_path(table: &Path) -> PathBuf {
    let mut s = table.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> Result<(), TableError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| TableError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

/// Writes any serializable records as CSV with a header row.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), TableError> {
    create_parent(path)?;
    let csv_err = |source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| TableError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, TableError> {
    let csv_err = |source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

pub fn write_meta(table: &Path, meta: &TableMeta) -> Result<(), TableError> {
    let path = meta_path(table);
    let text = serde_json::to_string_pretty(meta).map_err(|source| TableError::Meta {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|source| TableError::Io { path, source })
}

pub fn read_meta(table: &Path) -> Result<TableMeta, TableError> {
    let path = meta_path(table);
    let text = fs::read_to_string(&path).map_err(|source| TableError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| TableError::Meta { path, source })
}

/// Table plus sidecar.
pub fn write_table(path: &Path, rows: &[ResultRow], meta: &TableMeta) -> Result<(), TableError> {
    write_records(path, rows)?;
    write_meta(path, meta)
}

pub fn read_table(path: &Path) -> Result<Vec<ResultRow>, TableError> {
    read_records(path)
}

/// Human-readable summary; `(--)` marks a run that did not converge.
pub fn render_text(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>5} {:<14} {:<10} {:>2} {:>3} {:>7} {:>11} {:>9}  ",
        "problem", "size", "mask", "adapt", "p", "m", "iters", "time [s]", "accepted"
    );
    for r in rows {
        let iters = if r.converged {
            r.iterations.to_string()
        } else {
            "(--)".into()
        };
        let time = r.wall_time_seconds.map_or_else(|| "-".into(), |t| format!("{t:.4}"));
        let _ = writeln!(
            out,
            "{:<9} {:>5} {:<14} {:<10} {:>2} {:>3} {:>7} {:>11} {:>9}  {}",
            r.problem,
            r.size,
            r.mask,
            r.adapt,
            r.alternation,
            r.window,
            iters,
            time,
            format!("{}/{}", r.accepted_masks, r.mixing_steps),
            if r.best { "*" } else { "" }
        );
    }
    out
}
