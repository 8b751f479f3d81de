//! A single configured solve: problem construction, the solve itself and the
//! conversion of its report into a table row and a trace.

use std::path::Path;
use std::time::Instant;

use aap_core::{build_problem, solve, AapError, FixedPointProblem, ProblemKind, ProblemOptions, SolveReport, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::table::ResultRow;
use crate::trace::{self, TraceError, TraceHeader};

/// Everything needed to reproduce one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub problem: ProblemKind,
    pub size: usize,
    pub options: ProblemOptions,
    pub config: SolverConfig,
}

/// Result of [`RunSpec::execute`]. `report` is the partial report when the
/// solve aborted with `error`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: SolveReport,
    pub error: Option<String>,
    /// Wall time of `solve()` alone.
    pub wall_time_seconds: f64,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.error.is_none() && self.report.converged
    }
}

impl RunSpec {
    pub fn build(&self) -> Result<FixedPointProblem, AapError> {
        build_problem(self.problem, self.size, &self.options)
    }

    /// The configuration with the problem's recommended window filled in
    /// when none was requested (`window == 0`).
    pub fn resolved_config(&self, problem: &FixedPointProblem) -> SolverConfig {
        let mut cfg = self.config.clone();
        if cfg.window == 0 {
            cfg.window = problem.recommended_window();
        }
        cfg
    }

    /// Solves `problem` (built from this spec). Only the solve is timed.
    pub fn execute(&self, problem: &FixedPointProblem) -> RunOutcome {
        let cfg = self.resolved_config(problem);
        let x0 = problem.initial_guess();
        let start = Instant::now();
        let result = solve(problem, &cfg, &x0);
        let wall_time_seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(report) => RunOutcome {
                report,
                error: None,
                wall_time_seconds,
            },
            Err(failure) => RunOutcome {
                report: *failure.partial,
                error: Some(failure.error.to_string()),
                wall_time_seconds,
            },
        }
    }

    pub fn trace_header(&self, problem: &FixedPointProblem) -> TraceHeader {
        TraceHeader {
            problem: self.problem.to_string(),
            size: self.size,
            dim: problem.dim(),
            options: self.options.clone(),
            config: self.resolved_config(problem),
        }
    }

    /// Table row for a finished run.
    pub fn row(&self, problem: &FixedPointProblem, outcome: &RunOutcome, repetitions: usize, wall: Option<f64>) -> ResultRow {
        let cfg = self.resolved_config(problem);
        let report = &outcome.report;
        ResultRow {
            problem: self.problem.to_string(),
            size: self.size,
            dim: problem.dim(),
            mask: cfg.static_mask.label(),
            adapt: cfg.adaptivity.to_string(),
            sketch: cfg.sketch_percent,
            window: cfg.window,
            alternation: cfg.alternation,
            tol: cfg.rel_tolerance,
            seed: cfg.rng_seed,
            repetitions,
            converged: outcome.converged(),
            iterations: report.iterations,
            residual_evaluations: report.residual_evaluations,
            final_relative_residual: report.residual_history.last().copied(),
            mixing_steps: report.mask_trace.len(),
            accepted_masks: report.accepted_masks(),
            wall_time_seconds: wall,
            best: false,
            error: outcome.error.clone(),
        }
    }

    /// Row for a run whose problem could not even be built.
    pub fn failed_row(&self, error: &AapError) -> ResultRow {
        ResultRow {
            problem: self.problem.to_string(),
            size: self.size,
            dim: 0,
            mask: self.config.static_mask.label(),
            adapt: self.config.adaptivity.to_string(),
            sketch: self.config.sketch_percent,
            window: self.config.window,
            alternation: self.config.alternation,
            tol: self.config.rel_tolerance,
            seed: self.config.rng_seed,
            repetitions: 0,
            converged: false,
            iterations: 0,
            residual_evaluations: 0,
            final_relative_residual: None,
            mixing_steps: 0,
            accepted_masks: 0,
            wall_time_seconds: None,
            best: false,
            error: Some(error.to_string()),
        }
    }

    pub fn write_trace(&self, path: &Path, problem: &FixedPointProblem, outcome: &RunOutcome) -> Result<(), TraceError> {
        trace::write_trace(path, &self.trace_header(problem), &outcome.report, outcome.error.as_deref())
    }
}
