//! Solve traces as JSON lines. Every line is an object tagged by `kind`:
//!
//! * `header`: problem, size, construction options and solver config;
//! * `residual`: relative residual of one iteration;
//! * `mask`: stability record of one mixing step;
//! * `theorem`: full increments/weights of one mixing step (trace mode);
//! * `summary`: outcome counts.
//!
//! Traces deliberately carry no timing so that identical runs produce
//! identical files.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use aap_core::{ProblemOptions, SolveReport, SolverConfig, StabilityRecord, TheoremRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl TraceError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TraceError::Parse { line, .. } => Some(*line),
            TraceError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub problem: String,
    pub size: usize,
    pub dim: usize,
    pub options: ProblemOptions,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residual_evaluations: usize,
    pub ls_solves: usize,
    pub accepted_masks: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Residual { iteration: usize, relative_residual: f64 },
    Mask(StabilityRecord),
    Theorem(TheoremRecord),
    Summary(TraceSummary),
}

/// Serializes a report into trace lines.
pub fn trace_lines(header: &TraceHeader, report: &SolveReport, error: Option<&str>) -> Vec<TraceLine> {
    let mut lines = vec![TraceLine::Header(header.clone())];
    lines.extend(
        report
            .residual_history
            .iter()
            .enumerate()
            .map(|(iteration, &relative_residual)| TraceLine::Residual {
                iteration,
                relative_residual,
            }),
    );
    lines.extend(report.mask_trace.iter().cloned().map(TraceLine::Mask));
    lines.extend(report.theorem_trace.iter().cloned().map(TraceLine::Theorem));
    lines.push(TraceLine::Summary(TraceSummary {
        converged: report.converged && error.is_none(),
        iterations: report.iterations,
        residual_evaluations: report.residual_evaluations,
        ls_solves: report.ls_solves,
        accepted_masks: report.accepted_masks(),
        error: error.map(str::to_owned),
    }));
    lines
}

pub fn write_lines(path: &Path, lines: &[TraceLine]) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for line in lines {
        serde_json::to_writer(&mut w, line).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_trace(path: &Path, header: &TraceHeader, report: &SolveReport, error: Option<&str>) -> Result<(), TraceError> {
    write_lines(path, &trace_lines(header, report, error))
}

/// Reads a trace; the first line must be the header. Line numbers in errors
/// are 1-based.
pub fn read_trace(path: &Path) -> Result<Vec<(usize, TraceLine)>, TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if out.is_empty() && !matches!(parsed, TraceLine::Header(_)) {
            return Err(TraceError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: "trace must start with a header line".into(),
            });
        }
        out.push((lineno, parsed));
    }
    if out.is_empty() {
        return Err(TraceError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "empty trace".into(),
        });
    }
    Ok(out)
}
