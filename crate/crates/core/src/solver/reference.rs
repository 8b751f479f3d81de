//! Plain alternating Anderson-Picard: full-length increment matrices shifted
//! left on every update, no masks, no adaptivity. Used as the baseline the
//! two-level solver must reproduce exactly when every restriction is the
//! identity.

use std::collections::VecDeque;

use crate::dense::norm2;
use crate::error::Result;
use crate::fixed_point::FixedPointProblem;
use crate::lsq::QrWorkspace;

use super::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_state: Vec<f64>,
}

/// Runs the plain iteration; `observe(k, x)` sees every new iterate (`k = 0`
/// is the initial Picard step).
pub fn solve_reference(
    problem: &FixedPointProblem,
    config: &SolverConfig,
    x0: &[f64],
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<ReferenceOutcome> {
    config.validate()?;
    let n = problem.dim();
    let m = config.window;
    let omega = config.omega.unwrap_or_else(|| problem.recommended_omega());

    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    problem.evaluate_into(&x, &mut f)?;
    let norm0 = norm2(&f);
    let mut history = vec![1.0];
    if norm0 == 0.0 {
        return Ok(ReferenceOutcome {
            converged: true,
            iterations: 0,
            residual_history: history,
            final_state: x,
        });
    }
    let mut g: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi - omega * fi).collect();
    for (xi, fi) in x.iter_mut().zip(&f) {
        *xi -= omega * fi;
    }
    observe(0, &x);

    let mut f_cols: VecDeque<Vec<f64>> = VecDeque::with_capacity(m);
    let mut g_cols: VecDeque<Vec<f64>> = VecDeque::with_capacity(m);
    let mut qr = QrWorkspace::new(n, m);
    let mut packed = vec![0.0; n * m];
    let mut alpha = vec![0.0; m];
    let mut f_new = vec![0.0; n];

    for k in 1..=config.max_iterations {
        problem.evaluate_into(&x, &mut f_new)?;
        let df: Vec<f64> = f_new.iter().zip(&f).map(|(a, b)| a - b).collect();
        let g_new: Vec<f64> = x.iter().zip(&f_new).map(|(xi, fi)| xi - omega * fi).collect();
        let dg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        f.copy_from_slice(&f_new);
        g = g_new;

        let rel = norm2(&f) / norm0;
        history.push(rel);
        if rel < config.rel_tolerance {
            return Ok(ReferenceOutcome {
                converged: true,
                iterations: k,
                residual_history: history,
                final_state: x,
            });
        }

        if f_cols.len() == m {
            f_cols.pop_front();
            g_cols.pop_front();
        }
        f_cols.push_back(df);
        g_cols.push_back(dg);

        let mix = k % config.alternation == 0;
        let mut weights: Option<&[f64]> = None;
        if mix {
            let c = f_cols.len();
            for (j, col) in f_cols.iter().enumerate() {
                packed[j * n..(j + 1) * n].copy_from_slice(col);
            }
            if qr.solve_masked(&packed, n, c, &f, None, &mut alpha[..c]).is_ok() {
                weights = Some(&alpha[..c]);
            }
        }
        for (xi, fi) in x.iter_mut().zip(&f) {
            *xi -= omega * fi;
        }
        if let Some(w) = weights {
            for (gj, &aj) in g_cols.iter().zip(w) {
                let c = -aj;
                for (xi, gi) in x.iter_mut().zip(gj) {
                    *xi += c * gi;
                }
            }
        }
        observe(k, &x);
    }
    Ok(ReferenceOutcome {
        converged: false,
        iterations: config.max_iterations,
        residual_history: history,
        final_state: x,
    })
}
