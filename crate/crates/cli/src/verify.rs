//! Offline check of the perturbation bound on a recorded solve.
//!
//! For each mixing step the verifier rebuilds the perturbation
//! `delta = |sum_j alpha_j (I - P) df_j|` from the stored increments and the
//! rows the dynamic mask kept, and checks `delta <= sum_j eta_j` whenever the
//! hypotheses of the bound hold a posteriori:
//!
//! * the right-hand side perturbation is `|(I - P) f| <= eps |f|`, with
//!   `eps` recomputed from the kept rows;
//! * the increments respect the tracked Lipschitz estimate,
//!   `|df_j| <= L |dx_j|`;
//! * for every column, `|I - P| <= eta_j sigma / (L |f| |dx_j| (1 + eps))`
//!   with `|I - P| = 1` for a proper mask (0 for the identity) and `sigma`
//!   the smallest singular value of the masked increment matrix (computed
//!   here by a dense SVD, not the solver's estimate).
//!
//! Plain 2-norms of the least-squares data are used throughout, which is the
//! setting in which the bound is proved.
//!
//! A record is also checked for internal consistency: its increment matrix
//! must have full column rank (the solver only records successful solves),
//! the weights must solve the masked least-squares problem, and the stored
//! `eps_rhs` must match the kept rows.

use std::path::Path;

use aap_core::dense::norm2;
use aap_core::sketching::{epsilon_rhs, perturbation_norm};
use aap_core::{ColMatrix, TheoremRecord};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{read_trace, TraceError, TraceLine};

/// Slack on the bound itself.
pub const BOUND_SLACK: f64 = 1e-10;
/// Relative slack on recomputed inequalities that hold with equality.
const ROUNDOFF: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl VerifyError {
    pub fn line(&self) -> Option<usize> {
        match self {
            VerifyError::Trace(e) => e.line(),
            VerifyError::Parse { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub line: usize,
    pub iteration: usize,
    pub masked: bool,
    pub delta: f64,
    pub eta_sum: f64,
    pub epsilon: f64,
    pub sigma_min: f64,
    pub rhs_hypothesis: bool,
    pub lipschitz_consistent: bool,
    pub projection_hypothesis: bool,
    pub record_consistent: bool,
    /// Why the record is inconsistent, if it is.
    pub inconsistency: Option<String>,
    pub hypotheses_hold: bool,
    pub bound_holds: bool,
}

impl StepCheck {
    pub fn failed(&self) -> bool {
        !self.record_consistent || (self.hypotheses_hold && !self.bound_holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub steps: Vec<StepCheck>,
}

impl VerificationReport {
    /// No step has its hypotheses satisfied but the bound violated, and
    /// every record is internally consistent.
    pub fn passed(&self) -> bool {
        !self.steps.iter().any(StepCheck::failed)
    }

    pub fn masked_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.masked).count()
    }

    pub fn hypothesis_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.hypotheses_hold).count()
    }

    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>12} {:>12} {:>12} {:>5} {:>5} {:>5} {:>6}",
            "iter", "masked", "delta", "sum eta", "eps", "hyp", "bound", "ok", "record"
        );
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{:>6} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>5} {:>5} {:>5} {:>6}",
                s.iteration,
                s.masked,
                s.delta,
                s.eta_sum,
                s.epsilon,
                s.hypotheses_hold,
                s.bound_holds,
                !s.failed(),
                if s.record_consistent { "ok" } else { "BAD" }
            );
            if let Some(why) = &s.inconsistency {
                let _ = writeln!(out, "       line {}: {why}", s.line);
            }
        }
        let _ = writeln!(
            out,
            "{} mixing steps, {} masked, {} with hypotheses satisfied: {}",
            self.steps.len(),
            self.masked_steps(),
            self.hypothesis_steps(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> VerifyError {
    VerifyError::Parse {
        line,
        message: message.into(),
    }
}

fn check_shape(line: usize, r: &TheoremRecord) -> Result<(), VerifyError> {
    let c = r.columns;
    if c == 0 || r.l1 == 0 {
        return Err(parse_err(line, "theorem record with no columns or rows"));
    }
    let lens = [
        ("f", r.f.len(), r.l1),
        ("increments", r.increments.len(), r.l1 * c),
        ("dx_norms", r.dx_norms.len(), c),
        ("eta", r.eta.len(), c),
        ("alpha", r.alpha.len(), c),
    ];
    for (name, got, want) in lens {
        if got != want {
            return Err(parse_err(line, format!("`{name}` has {got} entries, expected {want}")));
        }
    }
    if let Some(kept) = &r.kept {
        if kept.is_empty() || kept.windows(2).any(|w| w[0] >= w[1]) || kept.iter().any(|&i| i >= r.l1) {
            return Err(parse_err(line, "`kept` must be a strictly increasing, in-range row list"));
        }
    }
    let finite = r
        .f
        .iter()
        .chain(&r.increments)
        .chain(&r.dx_norms)
        .chain(&r.eta)
        .chain(&r.alpha)
        .chain(std::iter::once(&r.lipschitz))
        .all(|v| v.is_finite());
    if !finite {
        return Err(parse_err(line, "non-finite value in theorem record"));
    }
    Ok(())
}

/// Checks one record; `line` is only used for messages.
pub fn check_record(line: usize, r: &TheoremRecord) -> Result<StepCheck, VerifyError> {
    check_shape(line, r)?;
    let (l1, c) = (r.l1, r.columns);
    let cols = ColMatrix::from_col_major(l1, c, r.increments.clone());
    let rows: Vec<usize> = r.kept.clone().unwrap_or_else(|| (0..l1).collect());
    let masked = r.kept.is_some() && rows.len() < l1;

    let fm = DMatrix::from_fn(rows.len(), c, |i, j| cols[(rows[i], j)]);
    let fv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| r.f[i]));
    let sv = fm.clone().svd(true, true);
    let sigma_min = if rows.len() >= c { sv.singular_values.min() } else { 0.0 };
    let sigma_max = sv.singular_values.max();

    let mut inconsistency = None;
    if !(sigma_max > 0.0 && sigma_min > 1e-18 * sigma_max) {
        inconsistency = Some(format!(
            "increments are rank deficient (sigma {sigma_min:e} / {sigma_max:e}) although weights were recorded"
        ));
    } else {
        let alpha = DVector::from_column_slice(&r.alpha);
        let normal = fm.transpose() * (&fm * &alpha - &fv);
        let scale = sigma_max * (sigma_max * alpha.norm() + fv.norm());
        if normal.norm() > 1e-8 * scale {
            inconsistency = Some(format!(
                "weights do not solve the recorded least-squares problem (normal residual {:e}, scale {scale:e})",
                normal.norm()
            ));
        }
    }
    let epsilon = if masked { epsilon_rhs(&r.f, &rows) } else { 0.0 };
    if masked {
        if let Some(stored) = r.eps_rhs {
            if (stored - epsilon).abs() > ROUNDOFF * (1.0 + epsilon) {
                inconsistency.get_or_insert(format!("stored eps_rhs {stored:e} differs from recomputed {epsilon:e}"));
            }
        }
    }

    let norm_f = norm2(&r.f);
    let removed: f64 = if masked {
        let mut keep = vec![false; l1];
        for &i in &rows {
            keep[i] = true;
        }
        r.f.iter().zip(&keep).filter(|(_, k)| !**k).map(|(v, _)| v * v).sum::<f64>().sqrt()
    } else {
        0.0
    };
    let rhs_hypothesis = removed <= epsilon * norm_f * (1.0 + ROUNDOFF) + f64::MIN_POSITIVE;

    let lipschitz_consistent = (0..c).all(|j| norm2(cols.col(j)) <= r.lipschitz * r.dx_norms[j] * (1.0 + ROUNDOFF));

    let projection_norm = if masked { 1.0 } else { 0.0 };
    let projection_hypothesis = (0..c).all(|j| {
        let denom = r.lipschitz * norm_f * r.dx_norms[j] * (1.0 + epsilon);
        if denom == 0.0 {
            return true;
        }
        projection_norm <= r.eta[j] * sigma_min / denom
    });

    let delta = if masked {
        let masks: Vec<Option<&[usize]>> = vec![Some(&rows[..]); c];
        perturbation_norm(&cols, &masks, &r.alpha)
    } else {
        0.0
    };
    let eta_sum: f64 = r.eta.iter().sum();
    let hypotheses_hold = rhs_hypothesis && lipschitz_consistent && projection_hypothesis;
    Ok(StepCheck {
        line,
        iteration: r.iteration,
        masked,
        delta,
        eta_sum,
        epsilon,
        sigma_min,
        rhs_hypothesis,
        lipschitz_consistent,
        projection_hypothesis,
        record_consistent: inconsistency.is_none(),
        inconsistency,
        hypotheses_hold,
        bound_holds: delta <= eta_sum + BOUND_SLACK,
    })
}

/// Verifies already-parsed trace lines (`(line number, line)` pairs).
pub fn verify_lines(lines: &[(usize, TraceLine)]) -> Result<VerificationReport, VerifyError> {
    let Some((_, TraceLine::Header(header))) = lines.first() else {
        return Err(parse_err(1, "trace must start with a header line"));
    };
    if !header.config.record_theorem_trace {
        return Err(parse_err(1, "trace was recorded without full increments (trace mode off)"));
    }
    let mut steps = Vec::new();
    for (line, l) in lines {
        if let TraceLine::Theorem(rec) = l {
            steps.push(check_record(*line, rec)?);
        }
    }
    Ok(VerificationReport { steps })
}

pub fn verify_theorem_trace(path: &Path) -> Result<VerificationReport, VerifyError> {
    verify_lines(&read_trace(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{trace_lines, write_lines, TraceHeader};
    use aap_core::{build_problem, solve, Adaptivity, ProblemKind, ProblemOptions, SolverConfig};

    fn traced(kind: ProblemKind, size: usize, adaptivity: Adaptivity) -> Vec<(usize, TraceLine)> {
        let options = ProblemOptions::default();
        let problem = build_problem(kind, size, &options).unwrap();
        let config = SolverConfig {
            window: problem.recommended_window(),
            adaptivity,
            record_theorem_trace: true,
            max_iterations: 500,
            ..Default::default()
        };
        let report = solve(&problem, &config, &problem.initial_guess()).unwrap();
        let header = TraceHeader {
            problem: kind.to_string(),
            size,
            dim: problem.dim(),
            options,
            config,
        };
        trace_lines(&header, &report, None).into_iter().enumerate().map(|(i, l)| (i + 1, l)).collect()
    }

    #[test]
    fn unadapted_run_has_zero_perturbation() {
        let lines = traced(ProblemKind::Linear, 20, Adaptivity::None);
        let report = verify_lines(&lines).unwrap();
        assert!(!report.steps.is_empty());
        assert!(report.steps.iter().all(|s| s.delta == 0.0 && s.bound_holds && s.record_consistent));
        assert!(report.passed());
    }

    #[test]
    fn randomized_plaplace_trace_verifies() {
        let lines = traced(ProblemKind::PLaplace, 9, Adaptivity::RandomizedConstant);
        let report = verify_lines(&lines).unwrap();
        assert!(report.masked_steps() > 0);
        assert!(report.steps.iter().all(|s| s.record_consistent), "{}", report.render());
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn zeroed_increments_are_caught() {
        let mut lines = traced(ProblemKind::PLaplace, 9, Adaptivity::RandomizedConstant);
        let target = lines
            .iter_mut()
            .find_map(|(_, l)| match l {
                TraceLine::Theorem(r) if r.kept.is_some() => Some(r),
                _ => None,
            })
            .unwrap();
        target.increments.iter_mut().for_each(|v| *v = 0.0);
        let report = verify_lines(&lines).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn structural_damage_is_a_parse_error_with_line() {
        let mut lines = traced(ProblemKind::PLaplace, 9, Adaptivity::SubselectConstant);
        let (line, rec) = lines
            .iter_mut()
            .find_map(|(n, l)| match l {
                TraceLine::Theorem(r) => Some((*n, r)),
                _ => None,
            })
            .unwrap();
        rec.increments.pop();
        assert_eq!(verify_lines(&lines).unwrap_err().line(), Some(line));
    }

    #[test]
    fn trace_mode_is_required() {
        let mut lines = traced(ProblemKind::Linear, 20, Adaptivity::None);
        if let TraceLine::Header(h) = &mut lines[0].1 {
            h.config.record_theorem_trace = false;
        }
        assert!(verify_lines(&lines).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_lines(&path, &lines.into_iter().map(|(_, l)| l).collect::<Vec<_>>()).unwrap();
        assert_eq!(verify_theorem_trace(&path).unwrap_err().line(), Some(1));
    }
}
