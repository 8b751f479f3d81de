//! Alternating Anderson-Picard iteration with two-level sketching.
//!
//! Every iteration evaluates the residual once, updates the increment
//! windows, and then either takes a relaxed Picard step or, every
//! `alternation`-th iteration, an Anderson mixing step whose least-squares
//! problem is restricted to a static field mask and (optionally) a dynamic
//! row mask chosen by the stability guard.

mod reference;
mod workspace;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AapError, Result};
use crate::fixed_point::FixedPointProblem;
use crate::sketching::{
    adaptive_step, build_static_mask, eta, update_lipschitz, Adaptivity, AdaptiveInputs, MaskOperator,
    StabilityRecord, DEFAULT_ETA_EXPONENT,
};

pub use reference::{solve_reference, ReferenceOutcome};
pub use workspace::{allocate_workspace, picard_update, IncrementNorms, Workspace};

/// Static restriction `Pi_1`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StaticMask {
    #[default]
    Identity,
    Field(String),
    Indices(Vec<usize>),
}

impl StaticMask {
    pub fn resolve(&self, problem: &FixedPointProblem) -> Result<MaskOperator> {
        match self {
            StaticMask::Identity => build_static_mask(problem, None),
            StaticMask::Field(name) => build_static_mask(problem, Some(name)),
            StaticMask::Indices(idx) => MaskOperator::from_indices(idx.clone(), problem.dim()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            StaticMask::Identity => "none".into(),
            StaticMask::Field(name) => name.clone(),
            StaticMask::Indices(idx) => format!("indices[{}]", idx.len()),
        }
    }
}

/// Solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Window size `m`.
    pub window: usize,
    /// Alternation `p`: mix on iterations `k` with `k % p == 0`.
    pub alternation: usize,
    /// Relaxation; `None` uses the problem's recommendation.
    pub omega: Option<f64>,
    /// Stop when `|f_k| / |f_0| < rel_tolerance`.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub static_mask: StaticMask,
    pub adaptivity: Adaptivity,
    /// Percentage of restricted rows kept by the dynamic mask, in `(0, 100]`.
    pub sketch_percent: f64,
    pub eta_exponent: f64,
    /// Use `min_j` instead of `max_j` in the LHS budget.
    pub strict_lhs: bool,
    /// Inverse power iterations for `sigma_min`, in `1..=5`.
    pub sigma_min_iterations: usize,
    pub rng_seed: u64,
    /// Record the full increments of every mixing step (for trace verification).
    pub record_theorem_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            window: 10,
            alternation: 1,
            omega: None,
            rel_tolerance: 1e-6,
            max_iterations: 1000,
            static_mask: StaticMask::Identity,
            adaptivity: Adaptivity::None,
            sketch_percent: 30.0,
            eta_exponent: DEFAULT_ETA_EXPONENT,
            strict_lhs: false,
            sigma_min_iterations: 3,
            rng_seed: 0,
            record_theorem_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AapError::InvalidConfig(msg));
        if self.window < 1 {
            return bad("window must be at least 1".into());
        }
        if self.alternation < 1 {
            return bad("alternation must be at least 1".into());
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("relaxation must be positive, got {w}"));
            }
        }
        if !(self.rel_tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.rel_tolerance));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.sketch_percent > 0.0 && self.sketch_percent <= 100.0) {
            return bad(format!("sketch percentage must be in (0, 100], got {}", self.sketch_percent));
        }
        if !(1..=5).contains(&self.sigma_min_iterations) {
            return bad(format!(
                "sigma_min iterations must be in 1..=5, got {}",
                self.sigma_min_iterations
            ));
        }
        if !self.eta_exponent.is_finite() {
            return bad("eta exponent must be finite".into());
        }
        Ok(())
    }
}

/// Full data of one mixing step, enough to recompute the perturbation norm
/// and both stability hypotheses offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRecord {
    pub iteration: usize,
    pub l1: usize,
    pub columns: usize,
    /// Field-restricted residual.
    pub f: Vec<f64>,
    /// Field-restricted residual increments, `l1 x columns`, column-major,
    /// oldest first.
    pub increments: Vec<f64>,
    pub dx_norms: Vec<f64>,
    pub lipschitz: f64,
    pub eta: Vec<f64>,
    /// Rows kept by the dynamic mask; `None` when it was the identity.
    pub kept: Option<Vec<usize>>,
    /// Least-squares weights of the (masked) problem.
    pub alpha: Vec<f64>,
    pub eps_lhs: Option<f64>,
    pub eps_rhs: Option<f64>,
    pub accepted: bool,
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Iterations after initialization (one residual evaluation each).
    pub iterations: usize,
    /// Total residual evaluations, including the initial one.
    pub residual_evaluations: usize,
    /// `|f_k| / |f_0|` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub mask_trace: Vec<StabilityRecord>,
    pub theorem_trace: Vec<TheoremRecord>,
    pub ls_solves: usize,
    pub initial_residual_norm: f64,
    pub wall_time_seconds: f64,
    pub final_state: Vec<f64>,
}

impl SolveReport {
    pub fn final_relative_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn accepted_masks(&self) -> usize {
        self.mask_trace.iter().filter(|r| r.accepted).count()
    }
}

/// A solve that aborted; carries everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("solve aborted at iteration {}: {error}", partial.iterations)]
pub struct SolveFailure {
    pub error: AapError,
    pub partial: Box<SolveReport>,
}

/// State after a [`Solver::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Running,
    Converged,
    MaxIterations,
}

/// Step-wise driver of the two-level solver.
pub struct Solver<'p> {
    problem: &'p FixedPointProblem,
    config: SolverConfig,
    ws: Workspace,
    rng: ChaCha8Rng,
    k: usize,
    norm_f0: f64,
    status: StepStatus,
    history: Vec<f64>,
    mask_trace: Vec<StabilityRecord>,
    theorem_trace: Vec<TheoremRecord>,
    ls_solves: usize,
    evaluations: usize,
}

impl<'p> Solver<'p> {
    /// Allocates the workspace and evaluates the initial residual.
    pub fn new(problem: &'p FixedPointProblem, config: SolverConfig, x0: &[f64]) -> Result<Self> {
        config.validate()?;
        let mask = config.static_mask.resolve(problem)?;
        let omega = config.omega.unwrap_or_else(|| problem.recommended_omega());
        let mut ws = allocate_workspace(problem.dim(), &config, Some(&mask), omega)?;
        let mut history = Vec::with_capacity(config.max_iterations + 1);
        let mask_trace = Vec::with_capacity(config.max_iterations / config.alternation + 1);
        let norm_f0 = ws.initialize(problem, x0)?;
        history.push(1.0);
        let status = if norm_f0 == 0.0 {
            StepStatus::Converged
        } else {
            ws.start();
            StepStatus::Running
        };
        Ok(Self {
            problem,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            ws,
            k: 0,
            norm_f0,
            status,
            history,
            mask_trace,
            theorem_trace: Vec::new(),
            ls_solves: 0,
            evaluations: 1,
        })
    }

    pub fn status(&self) -> StepStatus {
        self.status
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    /// Current iterate.
    pub fn x(&self) -> &[f64] {
        &self.ws.x
    }

    /// Runs one iteration. Calling it after termination is a no-op.
    pub fn step(&mut self) -> Result<StepStatus> {
        if self.status != StepStatus::Running {
            return Ok(self.status);
        }
        let k = self.k + 1;
        let norms = self.ws.update_increments(self.problem)?;
        self.k = k;
        self.evaluations += 1;
        let rel = norms.f / self.norm_f0;
        self.history.push(rel);
        if rel < self.config.rel_tolerance {
            self.status = StepStatus::Converged;
            return Ok(self.status);
        }
        self.ws.lipschitz = update_lipschitz(self.ws.lipschitz, norms.df, norms.dx);
        self.ws.restrict();
        self.ws.push_window(k, norms.dx);

        if k % self.config.alternation != 0 {
            let omega = self.ws.omega();
            picard_update(&mut self.ws.x, &self.ws.f, omega);
        } else {
            self.mix(k, norms.f);
        }
        if k >= self.config.max_iterations {
            self.status = StepStatus::MaxIterations;
        }
        Ok(self.status)
    }

    fn mix(&mut self, k: usize, norm_f: f64) {
        let c = self.ws.filled_columns();
        let mut scratch = self.ws.adaptive.take();
        let mut record = match scratch.as_mut() {
            None => StabilityRecord::disabled(k, c, self.ws.lipschitz, self.ws.l1()),
            Some(scratch) => {
                let ws = &self.ws;
                let input = AdaptiveInputs {
                    iteration: k,
                    stored_r: ws.stored_r(),
                    sigma_iterations: self.config.sigma_min_iterations,
                    n: ws.dim(),
                    lipschitz: ws.lipschitz,
                    norm_f,
                    dx_norms: &ws.dx_norms[..c],
                    f_restricted: ws.f_restricted(),
                    sketch_percent: self.config.sketch_percent,
                    strategy: self.config.adaptivity,
                    eta_exponent: self.config.eta_exponent,
                    strict: self.config.strict_lhs,
                };
                adaptive_step(&input, scratch, &mut self.rng)
            }
        };
        self.ws.adaptive = scratch;

        let ws = &mut self.ws;
        let solved = match (record.accepted, ws.adaptive.take()) {
            (true, Some(scratch)) => {
                let out = ws.solve_ls(Some(scratch.kept()));
                ws.adaptive = Some(scratch);
                out
            }
            (_, scratch) => {
                ws.adaptive = scratch;
                ws.solve_ls(None)
            }
        };
        match solved {
            Ok(()) => {
                self.ls_solves += 1;
                ws.store_r();
                // the least-squares weights enter the update with a minus
                // sign: x - w f - G alpha is the affine Anderson combination
                for j in 0..c {
                    ws.coef[j] = -ws.alpha[j];
                }
                let coef = std::mem::take(&mut ws.coef);
                ws.anderson_update(&coef[..c]);
                ws.coef = coef;
                if self.config.record_theorem_trace {
                    self.theorem_trace.push(self.theorem_record(k, &record));
                }
            }
            Err(_) => {
                record.ls_fallback = true;
                let omega = ws.omega();
                picard_update(&mut ws.x, &ws.f, omega);
            }
        }
        self.mask_trace.push(record);
    }

    fn theorem_record(&self, k: usize, record: &StabilityRecord) -> TheoremRecord {
        let ws = &self.ws;
        let c = ws.filled_columns();
        let kind = self.config.adaptivity.eta_kind();
        TheoremRecord {
            iteration: k,
            l1: ws.l1(),
            columns: c,
            f: ws.f_restricted().to_vec(),
            increments: ws.f_mat[..ws.l1() * c].to_vec(),
            dx_norms: ws.dx_norms[..c].to_vec(),
            lipschitz: ws.lipschitz,
            eta: (1..=c).map(|j| eta(j, kind, self.config.eta_exponent)).collect(),
            kept: match (&ws.adaptive, record.accepted) {
                (Some(s), true) => Some(s.kept().to_vec()),
                _ => None,
            },
            alpha: ws.alpha[..c].to_vec(),
            eps_lhs: record.eps_lhs,
            eps_rhs: record.eps_rhs,
            accepted: record.accepted,
        }
    }

    /// Builds the report for the current state.
    pub fn report(&self, wall_time_seconds: f64) -> SolveReport {
        SolveReport {
            converged: self.status == StepStatus::Converged,
            iterations: self.k,
            residual_evaluations: self.evaluations,
            residual_history: self.history.clone(),
            mask_trace: self.mask_trace.clone(),
            theorem_trace: self.theorem_trace.clone(),
            ls_solves: self.ls_solves,
            initial_residual_norm: self.norm_f0,
            wall_time_seconds,
            final_state: self.ws.x.clone(),
        }
    }

    /// Runs until convergence or the iteration cap.
    pub fn run(&mut self) -> Result<StepStatus> {
        while self.step()? == StepStatus::Running {}
        Ok(self.status)
    }
}

/// Solves `T(x) = 0` from `x0`. Non-convergence is reported through
/// `converged = false`; a numerical breakdown aborts with the partial report.
pub fn solve(problem: &FixedPointProblem, config: &SolverConfig, x0: &[f64]) -> Result<SolveReport, SolveFailure> {
    let start = Instant::now();
    let mut solver = Solver::new(problem, config.clone(), x0).map_err(|error| SolveFailure {
        error,
        partial: Box::new(empty_report(x0)),
    })?;
    match solver.run() {
        Ok(_) => Ok(solver.report(start.elapsed().as_secs_f64())),
        Err(error) => Err(SolveFailure {
            error,
            partial: Box::new(solver.report(start.elapsed().as_secs_f64())),
        }),
    }
}

fn empty_report(x0: &[f64]) -> SolveReport {
    SolveReport {
        converged: false,
        iterations: 0,
        residual_evaluations: 0,
        residual_history: Vec::new(),
        mask_trace: Vec::new(),
        theorem_trace: Vec::new(),
        ls_solves: 0,
        initial_residual_norm: f64::NAN,
        wall_time_seconds: 0.0,
        final_state: x0.to_vec(),
    }
}
