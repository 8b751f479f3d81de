//! Full-memory Anderson mixing on a linear problem is a GMRES iteration in
//! disguise: with `T(x) = A x - b`, relaxation `w` and `p = 1`, the residual
//! after iteration `k + 1` is `(I - w A)` applied to the GMRES residual of
//! Krylov dimension `k` started from the same `x0`.

use aap_core::problems::LinearProblem;
use aap_core::{solve, SolverConfig};
use nalgebra::{DMatrix, DVector};

/// Textbook GMRES (Arnoldi with modified Gram-Schmidt, small least-squares
/// problem solved by SVD). Returns the residual vectors `b - A x_k` for
/// `k = 0..=steps`.
fn gmres_residuals(a: &DMatrix<f64>, b: &DVector<f64>, x0: &DVector<f64>, steps: usize) -> Vec<DVector<f64>> {
    let n = a.nrows();
    let r0 = b - a * x0;
    let beta = r0.norm();
    let mut v: Vec<DVector<f64>> = vec![&r0 / beta];
    let mut h = DMatrix::<f64>::zeros(steps + 1, steps);
    let mut out = vec![r0.clone()];
    for k in 0..steps {
        let mut w = a * &v[k];
        for i in 0..=k {
            let hik = w.dot(&v[i]);
            h[(i, k)] = hik;
            w -= hik * &v[i];
        }
        // Second pass keeps the basis orthonormal to roundoff.
        for i in 0..=k {
            let c = w.dot(&v[i]);
            h[(i, k)] += c;
            w -= c * &v[i];
        }
        let hn = w.norm();
        h[(k + 1, k)] = hn;
        let hk = h.view((0, 0), (k + 2, k + 1)).into_owned();
        let mut e1 = DVector::zeros(k + 2);
        e1[0] = beta;
        let y = hk.svd(true, true).solve(&e1, 1e-300).unwrap();
        let mut x = x0.clone();
        for (i, yi) in y.iter().enumerate() {
            x += *yi * &v[i];
        }
        out.push(b - a * &x);
        if hn == 0.0 || k + 1 == n {
            break;
        }
        v.push(w / hn);
    }
    out
}

#[test]
fn full_window_anderson_matches_gmres() {
    let n = 50;
    for seed in [1_u64, 2, 3] {
        let lp = LinearProblem::random_spd(n, seed).unwrap();
        let a = DMatrix::from_column_slice(n, n, lp.matrix().as_slice());
        let b = DVector::from_column_slice(lp.rhs());
        let problem = lp.into_problem("linear");
        let omega = problem.recommended_omega();
        let cfg = SolverConfig {
            window: 50,
            alternation: 1,
            rel_tolerance: 1e-12,
            max_iterations: 60,
            ..Default::default()
        };
        let x0 = vec![0.0; n];
        let report = solve(&problem, &cfg, &x0).unwrap();
        assert!(report.converged, "seed {seed}: {:?}", report.residual_history.last());

        let res = gmres_residuals(&a, &b, &DVector::from_column_slice(&x0), n);
        let r0 = res[0].norm();
        let damp = DMatrix::<f64>::identity(n, n) - omega * &a;
        let mut compared = 0;
        for (k, &ours) in report.residual_history.iter().enumerate().skip(1) {
            if ours < 1e-10 {
                break;
            }
            let expected = (&damp * &res[k - 1]).norm() / r0;
            let err = (ours - expected).abs();
            // Once the residual approaches the roundoff level of evaluating
            // `A x - b` (about 1e-15 relative to `|r0|`) only an absolute
            // agreement is meaningful.
            if expected > 1e-6 {
                assert!(err / expected < 1e-8, "seed {seed}, iteration {k}: {ours:e} vs {expected:e}");
            } else {
                assert!(err < 1e-13, "seed {seed}, iteration {k}: {ours:e} vs {expected:e}");
            }
            compared += 1;
        }
        assert!(compared >= 10, "only {compared} iterations compared");
    }
}

#[test]
fn first_step_is_damped_picard() {
    let lp = LinearProblem::random_spd(20, 9).unwrap();
    let a = DMatrix::from_column_slice(20, 20, lp.matrix().as_slice());
    let b = DVector::from_column_slice(lp.rhs());
    let problem = lp.into_problem("linear");
    let w = problem.recommended_omega();
    let cfg = SolverConfig {
        window: 20,
        max_iterations: 1,
        ..Default::default()
    };
    let report = solve(&problem, &cfg, &[0.0; 20]).unwrap();
    // x1 = x0 - w (A x0 - b) = w b
    let x1 = w * &b;
    let expected = (&a * &x1 - &b).norm() / b.norm();
    assert!((report.residual_history[1] - expected).abs() < 1e-14);
}
