//! Finite-difference q-Laplacian `-div(|grad u|^{q-2} grad u) = 1` with
//! homogeneous Dirichlet data on the unit interval or square.
//!
//! The residual is the Laplace-stabilized update
//! `T(u) = (1/beta) A^{-1} F(u)` where `A = -Lap_h` and `F` is the nonlinear
//! operator. Fluxes live on cell faces; the face gradient combines the normal
//! difference with the tangential difference averaged over the two adjacent
//! nodes, and the conductivity is regularized as
//! `(|grad u|^2 + 1e-10)^{(q-2)/2}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AapError, Result};
use crate::fixed_point::{FieldLayout, FixedPointProblem, Residual};

use super::sparse::{BandedCholesky, CsrMatrix};
use super::GridSpec;

pub const DEFAULT_Q: f64 = 1.5;
pub const DEFAULT_BETA: f64 = 10.0;
pub const GRADIENT_REGULARIZATION: f64 = 1e-10;

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PLaplacianInit {
    #[default]
    Zero,
    /// Solution of the linear Poisson problem `-Lap_h u = 1`.
    Poisson,
}

impl std::str::FromStr for PLaplacianInit {
    type Err = AapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "poisson" => Ok(Self::Poisson),
            other => Err(AapError::InvalidConfig(format!("unknown initial guess `{other}` (zero|poisson)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PLaplacian {
    grid: GridSpec,
    q: f64,
    beta: f64,
    /// Interior nodes per side.
    m: usize,
    laplacian: CsrMatrix,
    factor: BandedCholesky,
}

impl PLaplacian {
    pub fn new(grid: GridSpec, q: f64, beta: f64) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(AapError::InvalidConfig(format!("exponent q must exceed 1, got {q}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(AapError::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        let m = grid.points() - 2;
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let mut t = Vec::new();
        if grid.dims() == 1 {
            for i in 0..m {
                t.push((i, i, 2.0));
                if i > 0 {
                    t.push((i, i - 1, -1.0));
                    t.push((i - 1, i, -1.0));
                }
            }
        } else {
            super::stencil_block(&mut t, 0, m, m, 0.0, 0.0);
        }
        let n = m.pow(grid.dims() as u32);
        let laplacian = CsrMatrix::from_triplets(n, n, t.into_iter().map(|(r, c, v)| (r, c, v * inv_h2)).collect());
        let factor = BandedCholesky::factor(&laplacian)?;
        Ok(Self {
            grid,
            q,
            beta,
            m,
            laplacian,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.pow(self.grid.dims() as u32)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `-Lap_h` on the interior nodes (including the `1/h^2`).
    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    /// Solution of `-Lap_h u = 1`.
    pub fn poisson_solution(&self) -> Vec<f64> {
        let mut u = vec![1.0; self.dim()];
        self.factor.solve_in_place(&mut u);
        u
    }

    fn kappa(&self, grad_sq: f64) -> f64 {
        if self.q == 2.0 {
            1.0
        } else {
            (grad_sq + GRADIENT_REGULARIZATION).powf(0.5 * (self.q - 2.0))
        }
    }

    /// Nonlinear operator `F(u) = -div(kappa grad u) - 1`.
    pub fn operator_into(&self, u: &[f64], out: &mut [f64]) {
        let h = self.grid.h();
        let inv_h2 = 1.0 / (h * h);
        let m = self.m;
        if self.grid.dims() == 1 {
            let at = |i: usize| if i == 0 || i > m { 0.0 } else { u[i - 1] };
            // Face between nodes i and i+1 (grid numbering incl. boundary).
            let flux_coeff = |i: usize| {
                let g = (at(i + 1) - at(i)) / h;
                self.kappa(g * g)
            };
            for i in 1..=m {
                let ke = flux_coeff(i);
                let kw = flux_coeff(i - 1);
                out[i - 1] = (ke * (at(i) - at(i + 1)) + kw * (at(i) - at(i - 1))) * inv_h2 - 1.0;
            }
            return;
        }
        let at = |i: usize, j: usize| {
            if i == 0 || j == 0 || i > m || j > m {
                0.0
            } else {
                u[(j - 1) * m + (i - 1)]
            }
        };
        // Vertical face between (i, j) and (i+1, j).
        let kx = |i: usize, j: usize| {
            let gx = (at(i + 1, j) - at(i, j)) / h;
            let up = if j <= m { at(i, j + 1) + at(i + 1, j + 1) } else { 0.0 };
            let down = if j >= 1 { at(i, j - 1) + at(i + 1, j - 1) } else { 0.0 };
            let gy = (up - down) / (4.0 * h);
            self.kappa(gx * gx + gy * gy)
        };
        // Horizontal face between (i, j) and (i, j+1).
        let ky = |i: usize, j: usize| {
            let gy = (at(i, j + 1) - at(i, j)) / h;
            let right = if i <= m { at(i + 1, j) + at(i + 1, j + 1) } else { 0.0 };
            let left = if i >= 1 { at(i - 1, j) + at(i - 1, j + 1) } else { 0.0 };
            let gx = (right - left) / (4.0 * h);
            self.kappa(gx * gx + gy * gy)
        };
        for j in 1..=m {
            for i in 1..=m {
                let c = at(i, j);
                let s = kx(i, j) * (c - at(i + 1, j))
                    + kx(i - 1, j) * (c - at(i - 1, j))
                    + ky(i, j) * (c - at(i, j + 1))
                    + ky(i, j - 1) * (c - at(i, j - 1));
                out[(j - 1) * m + (i - 1)] = s * inv_h2 - 1.0;
            }
        }
    }

    pub fn into_problem(self, init: PLaplacianInit) -> FixedPointProblem {
        let n = self.dim();
        let x0 = match init {
            PLaplacianInit::Zero => None,
            PLaplacianInit::Poisson => Some(self.poisson_solution()),
        };
        let p = FixedPointProblem::new("plaplace", Arc::new(self), FieldLayout::single("u", n))
            .with_omega(1.0)
            .with_window(10);
        match x0 {
            Some(x0) => p.with_initial_guess(x0),
            None => p,
        }
    }
}

impl Residual for PLaplacian {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.operator_into(x, out);
        self.factor.solve_in_place(out);
        let s = 1.0 / self.beta;
        for o in out.iter_mut() {
            *o *= s;
        }
    }
}

/// q-Laplacian with the given stabilization, zero initial guess.
pub fn make_p_laplacian(grid: GridSpec, q: f64, beta: f64) -> Result<FixedPointProblem> {
    Ok(PLaplacian::new(grid, q, beta)?.into_problem(PLaplacianInit::Zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::norm2;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn interior_unknowns() {
        assert_eq!(make_p_laplacian(GridSpec::square(9).unwrap(), 1.5, 10.0).unwrap().dim(), 49);
        assert_eq!(make_p_laplacian(GridSpec::line(9).unwrap(), 1.5, 10.0).unwrap().dim(), 7);
        assert!(make_p_laplacian(GridSpec::line(9).unwrap(), 1.0, 10.0).is_err());
        assert!(make_p_laplacian(GridSpec::line(9).unwrap(), 1.5, 0.0).is_err());
    }

    #[test]
    fn laplacian_is_symmetric_positive_definite() {
        let p = PLaplacian::new(GridSpec::square(8).unwrap(), 1.5, 10.0).unwrap();
        let a = p.laplacian().to_dense();
        let d = DMatrix::from_column_slice(a.rows(), a.cols(), a.as_slice());
        assert_eq!(d, d.transpose());
        assert!(d.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn quadratic_exponent_reduces_to_poisson() {
        for grid in [GridSpec::line(11).unwrap(), GridSpec::square(9).unwrap()] {
            let p = PLaplacian::new(grid, 2.0, 1.0).unwrap();
            let n = p.dim();
            // Dense oracle for -Lap_h u = 1.
            let a = p.laplacian().to_dense();
            let d = DMatrix::from_column_slice(n, n, a.as_slice());
            let u = d.lu().solve(&DVector::from_element(n, 1.0)).unwrap();
            let ours = p.poisson_solution();
            for (a, b) in ours.iter().zip(u.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            let mut out = vec![0.0; n];
            p.operator_into(&ours, &mut out);
            assert!(norm2(&out) < 1e-9);
            // With q = 2, T(u) = u - u_poisson.
            let problem = p.into_problem(PLaplacianInit::Zero);
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
            problem.evaluate_into(&x, &mut out).unwrap();
            for i in 0..n {
                assert!((out[i] - (x[i] - ours[i])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn residual_at_zero_is_minus_scaled_poisson_solution() {
        let p = PLaplacian::new(GridSpec::square(9).unwrap(), 1.5, 10.0).unwrap();
        let up = p.poisson_solution();
        let problem = p.into_problem(PLaplacianInit::Zero);
        let mut out = vec![0.0; 49];
        problem.evaluate_into(&vec![0.0; 49], &mut out).unwrap();
        for (o, u) in out.iter().zip(&up) {
            assert!((o + u / 10.0).abs() < 1e-14);
            assert!(*o < 0.0);
        }
    }

    #[test]
    fn poisson_initial_guess_is_registered() {
        let p = PLaplacian::new(GridSpec::line(9).unwrap(), 1.5, 10.0).unwrap();
        let up = p.poisson_solution();
        let problem = p.into_problem(PLaplacianInit::Poisson);
        assert_eq!(problem.initial_guess(), up);
    }

    #[test]
    fn operator_is_symmetric_under_reflection() {
        // The square domain and unit forcing are invariant under x <-> y.
        let p = PLaplacian::new(GridSpec::square(8).unwrap(), 1.5, 10.0).unwrap();
        let m = 6;
        let u: Vec<f64> = (0..m * m)
            .map(|k| {
                let (i, j) = (k % m, k / m);
                ((i + 1) as f64 * 0.7).sin() * ((j + 2) as f64 * 0.4).cos()
            })
            .collect();
        let ut: Vec<f64> = (0..m * m).map(|k| u[(k % m) * m + k / m]).collect();
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m * m];
        p.operator_into(&u, &mut a);
        p.operator_into(&ut, &mut b);
        for k in 0..m * m {
            assert!((a[(k % m) * m + k / m] - b[k]).abs() < 1e-9);
        }
    }
}
