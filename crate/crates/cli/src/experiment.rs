//! Sweep driver: one table row per `(size, configuration)`.
//!
//! A run that fails to build, diverges, or aborts is recorded as a
//! non-converged row; the sweep itself never stops early.

use std::path::{Path, PathBuf};

use aap_core::FixedPointProblem;

use crate::plan::{ExperimentPlan, PlanConfig, PlanMode};
use crate::run::RunSpec;
use crate::table::ResultRow;
use crate::trace::TraceError;

/// Trace file of one cell: `<dir>/<problem>_<size>_<mask>_<adapt>_p<p>.jsonl`.
pub fn trace_path(dir: &Path, spec: &RunSpec) -> PathBuf {
    let mask = spec.config.static_mask.label().replace(['[', ']'], "");
    dir.join(format!(
        "{}_{}_{}_{}_p{}.jsonl",
        spec.problem, spec.size, mask, spec.config.adaptivity, spec.config.alternation
    ))
}

struct Cell {
    row: ResultRow,
    trace_error: Option<TraceError>,
}

fn run_cell(plan: &ExperimentPlan, problem: &Result<FixedPointProblem, aap_core::AapError>, spec: &RunSpec, timed: bool) -> Cell {
    let problem = match problem {
        Ok(p) => p,
        Err(e) => {
            return Cell {
                row: spec.failed_row(e),
                trace_error: None,
            }
        }
    };
    let mut outcome = spec.execute(problem);
    let mut total = outcome.wall_time_seconds;
    for _ in 1..plan.repetitions {
        let again = spec.execute(problem);
        total += again.wall_time_seconds;
        // Iteration counts are deterministic; keep the first report.
        debug_assert_eq!(again.report.iterations, outcome.report.iterations);
        outcome.wall_time_seconds = again.wall_time_seconds;
    }
    let wall = timed.then(|| total / plan.repetitions as f64);
    let row = spec.row(problem, &outcome, plan.repetitions, wall);
    let trace_error = plan
        .trace_dir
        .as_ref()
        .and_then(|dir| spec.write_trace(&trace_path(dir, spec), problem, &outcome).err());
    Cell { row, trace_error }
}

/// Marks the fastest converged configuration of every size.
pub fn mark_best(rows: &mut [ResultRow]) {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for size in sizes {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.size == size && r.converged)
            .filter_map(|(i, r)| r.wall_time_seconds.map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        if let Some(i) = best {
            rows[i].best = true;
        }
    }
}

/// Runs every cell of the plan. Rows are ordered by size, then by the order
/// of `plan.configs`. Trace write failures are returned alongside the rows.
pub fn run_experiment(plan: &ExperimentPlan) -> (Vec<ResultRow>, Vec<TraceError>) {
    let mut rows = Vec::with_capacity(plan.row_count());
    let mut trace_errors = Vec::new();
    for &size in &plan.sizes {
        let specs: Vec<RunSpec> = plan.configs.iter().map(|c: &PlanConfig| plan.spec(size, c)).collect();
        // Construction is shared by every configuration of a size and kept
        // out of the timed region.
        let problem = specs[0].build();
        let cells: Vec<Cell> = if plan.parallel {
            let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
            let chunk = specs.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = specs
                    .chunks(chunk)
                    .map(|group| {
                        let problem = &problem;
                        s.spawn(move || group.iter().map(|spec| run_cell(plan, problem, spec, false)).collect::<Vec<_>>())
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
            })
        } else {
            specs.iter().map(|spec| run_cell(plan, &problem, spec, true)).collect()
        };
        for cell in cells {
            rows.push(cell.row);
            trace_errors.extend(cell.trace_error);
        }
    }
    if plan.mode == PlanMode::Best {
        mark_best(&mut rows);
    }
    (rows, trace_errors)
}
