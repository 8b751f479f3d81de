use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{dot, norm2, ColMatrix};
use crate::error::{AapError, Result};
use crate::fixed_point::{FieldLayout, FixedPointProblem, Residual};

/// Smallest and largest eigenvalue of the generated matrices.
pub const SPECTRUM: (f64, f64) = (0.1, 2.0);

/// Dense SPD system `A x = b` with residual `T(x) = A x - b`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    a: ColMatrix,
    b: Vec<f64>,
}

impl LinearProblem {
    pub fn new(a: ColMatrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() != a.cols() || a.rows() != b.len() {
            return Err(AapError::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        Ok(Self { a, b })
    }

    /// `A = Q diag(lambda) Q^T` with `Q` orthonormal and the spectrum spread
    /// over `[0.1, 2]` (both endpoints attained); `b` uniform in `[-1, 1]`.
    pub fn random_spd(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(AapError::InvalidConfig(format!("linear problem needs n >= 2, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = ColMatrix::zeros(n, n);
        for v in q.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        // Two passes of modified Gram-Schmidt keep Q orthonormal to roundoff.
        for _ in 0..2 {
            for j in 0..n {
                for i in 0..j {
                    let (qi, qj) = {
                        let s = q.as_mut_slice();
                        let (lo, hi) = s.split_at_mut(j * n);
                        (&lo[i * n..(i + 1) * n], &mut hi[..n])
                    };
                    let r = dot(qi, qj);
                    for (a, b) in qj.iter_mut().zip(qi) {
                        *a -= r * b;
                    }
                }
                let col = q.col_mut(j);
                let nrm = norm2(col);
                for v in col.iter_mut() {
                    *v /= nrm;
                }
            }
        }
        let (lo, hi) = SPECTRUM;
        let mut lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        lambda[0] = lo;
        lambda[n - 1] = hi;

        let mut a = ColMatrix::zeros(n, n);
        for (k, &l) in lambda.iter().enumerate() {
            let qk = q.col(k).to_vec();
            for j in 0..n {
                let s = l * qk[j];
                let col = a.col_mut(j);
                for i in 0..n {
                    col[i] += s * qk[i];
                }
            }
        }
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
                a.as_mut_slice()[j * n + i] = avg;
                a.as_mut_slice()[i * n + j] = avg;
            }
        }
        let b = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(a, b)
    }

    pub fn matrix(&self) -> &ColMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Power-iteration estimate of the largest eigenvalue.
    pub fn estimate_lambda_max(&self, iterations: usize) -> f64 {
        let n = self.dim();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut w = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..iterations {
            self.a.matvec_into(&v, &mut w);
            lambda = dot(&v, &w);
            let nrm = norm2(&w);
            if nrm == 0.0 {
                return 0.0;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / nrm;
            }
        }
        lambda
    }

    /// Wraps the system as a fixed-point problem with `omega = 1/lambda_max`.
    pub fn into_problem(self, name: &str) -> FixedPointProblem {
        let n = self.dim();
        let lmax = self.estimate_lambda_max(100);
        let omega = if lmax > 0.0 { 1.0 / lmax } else { 1.0 };
        FixedPointProblem::new(name, Arc::new(self), FieldLayout::single("x", n))
            .with_omega(omega)
            .with_window(10)
    }
}

impl Residual for LinearProblem {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.a.matvec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o -= b;
        }
    }
}

/// Seeded random SPD test system of dimension `n`.
pub fn make_linear(n: usize, seed: u64) -> Result<FixedPointProblem> {
    Ok(LinearProblem::random_spd(n, seed)?.into_problem("linear"))
}
