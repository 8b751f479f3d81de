//! Stokes-type saddle-point system on a staggered (MAC) grid over the unit
//! square, no-slip on every wall.
//!
//! With `nc = points - 1` cells per side and `h = 1/nc`, the unknowns are the
//! interior normal velocities on vertical faces (`u`, `(nc-1) * nc`), on
//! horizontal faces (`v`, `nc * (nc-1)`) and one pressure per cell (`nc^2`).
//! Every block carries a factor `h^2` (the scaling a bilinear finite-element
//! assembly would produce):
//!
//! ```text
//! A = [ K  B^T ]    K = h^2 (-Lap_h),  B = -h^2 div_h,  M_p = h^2 I
//!     [ B  0   ]
//! ```
//!
//! The residual is `T(x) = P^{-1} J (A x - F)` with `J = diag(I, -I)` and
//! `P = diag(K~, M_p)`, where `K~` is a direct factorization of a velocity
//! operator spectrally equivalent to `K` (standing in for a multigrid cycle).
//! Negating the pressure row does not change the solution but turns the
//! indefinite preconditioned operator (eigenvalues in `[-0.62, 1.62]`) into
//! one with `lambda (1 - lambda) = mu`, `mu` in `(0, 1]`, on which plain
//! Richardson does not diverge. The constant pressure is a kernel that the
//! iteration never excites because `F` has no pressure component.

use std::sync::Arc;

use crate::error::{AapError, Result};
use crate::fixed_point::{FieldLayout, FixedPointProblem, Residual};

use super::sparse::{BandedCholesky, CsrMatrix};
use super::GridSpec;

/// Larger grids are refused: the banded velocity factor grows as `points^3`.
pub const MAX_SADDLE_POINTS: usize = 65;

/// Assembled staggered-grid system with a cached velocity factorization.
#[derive(Debug, Clone)]
pub struct SaddlePoint {
    nc: usize,
    h: f64,
    nu: usize,
    nv: usize,
    np: usize,
    system: CsrMatrix,
    rhs: Vec<f64>,
    velocity_block: CsrMatrix,
    velocity_preconditioner: CsrMatrix,
    velocity_factor: BandedCholesky,
}

/// Body force: a constant part plus a rotational part, so that the velocity
/// is not trivially zero (a pure gradient force is absorbed by the pressure).
pub fn body_force(x: f64, y: f64) -> (f64, f64) {
    (1.0 - 4.0 * (y - 0.5), 1.0 + 4.0 * (x - 0.5))
}

impl SaddlePoint {
    pub fn new(grid: GridSpec) -> Result<Self> {
        if grid.dims() != 2 {
            return Err(AapError::InvalidConfig("saddle problem is two-dimensional".into()));
        }
        if grid.points() > MAX_SADDLE_POINTS {
            return Err(AapError::ResourceLimit(format!(
                "saddle grid with {} points per side exceeds the limit of {MAX_SADDLE_POINTS}",
                grid.points()
            )));
        }
        let nc = grid.points() - 1;
        let h = grid.h();
        let nu = (nc - 1) * nc;
        let nv = nc * (nc - 1);
        let np = nc * nc;
        let n = nu + nv + np;
        let h2 = h * h;

        // Velocity Laplacians. A wall parallel to the face normal sits at
        // half a cell: reflecting ghost value, extra +1 on the diagonal. The
        // other walls coincide with boundary faces whose value is zero.
        let mut vel = Vec::new();
        super::stencil_block(&mut vel, 0, nc - 1, nc, 1.0, 0.0);
        super::stencil_block(&mut vel, nu, nc, nc - 1, 0.0, 1.0);
        let velocity_block = CsrMatrix::from_triplets(nu + nv, nu + nv, vel.clone());


        // The unscaled stencil is already h^2 (-Lap_h).
        let mut t = vel;
        // B = -h^2 div_h = -h (u_{i+1,j} - u_{i,j} + v_{i,j+1} - v_{i,j}).
        let u_idx = |i: usize, j: usize| -> Option<usize> { (i >= 1 && i < nc).then(|| j * (nc - 1) + (i - 1)) };
        let v_idx = |i: usize, j: usize| -> Option<usize> { (j >= 1 && j < nc).then(|| nu + (j - 1) * nc + i) };
        for j in 0..nc {
            for i in 0..nc {
                let p = nu + nv + j * nc + i;
                let entries = [(u_idx(i + 1, j), -h), (u_idx(i, j), h), (v_idx(i, j + 1), -h), (v_idx(i, j), h)];
                for (idx, val) in entries {
                    if let Some(c) = idx {
                        t.push((p, c, val));
                        t.push((c, p, val));
                    }
                }
            }
        }
        let system = CsrMatrix::from_triplets(n, n, t);

        let mut rhs = vec![0.0; n];
        for j in 0..nc {
            for i in 1..nc {
                let (fx, _) = body_force(i as f64 * h, (j as f64 + 0.5) * h);
                rhs[j * (nc - 1) + (i - 1)] = h2 * fx;
            }
        }
        for j in 1..nc {
            for i in 0..nc {
                let (_, fy) = body_force((i as f64 + 0.5) * h, j as f64 * h);
                rhs[nu + (j - 1) * nc + i] = h2 * fy;
            }
        }

        // Preconditioner: the same stencil with the half-cell wall
        // correction dropped. It is spectrally equivalent to K (eigenvalues
        // of its inverse times K lie in [1, 2) on every grid) but, like a multigrid
        // cycle, not exact; an exact velocity solve zeroes the velocity
        // residual after every Picard step and leaves the pressure rows as
        // the only source of increments.
        let mut pre = Vec::new();
        super::stencil_block(&mut pre, 0, nc - 1, nc, 0.0, 0.0);
        super::stencil_block(&mut pre, nu, nc, nc - 1, 0.0, 0.0);
        let velocity_preconditioner = CsrMatrix::from_triplets(nu + nv, nu + nv, pre);
        let velocity_factor = BandedCholesky::factor(&velocity_preconditioner)?;
        Ok(Self {
            nc,
            h,
            nu,
            nv,
            np,
            system,
            rhs,
            velocity_block,
            velocity_preconditioner,
            velocity_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.nu + self.nv + self.np
    }

    pub fn cells_per_side(&self) -> usize {
        self.nc
    }

    pub fn velocity_dim(&self) -> usize {
        self.nu + self.nv
    }

    pub fn pressure_dim(&self) -> usize {
        self.np
    }

    /// Full block matrix `A`.
    pub fn system(&self) -> &CsrMatrix {
        &self.system
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Velocity block `K` (the five-point stencil without `1/h^2`).
    pub fn velocity_stencil(&self) -> &CsrMatrix {
        &self.velocity_block
    }

    /// Velocity block of the preconditioner.
    pub fn velocity_preconditioner(&self) -> &CsrMatrix {
        &self.velocity_preconditioner
    }

    /// `h^2 * div_h u` per cell, i.e. `-B u`.
    pub fn scaled_divergence(&self, x: &[f64]) -> Vec<f64> {
        let vel = self.velocity_dim();
        let mut out = vec![0.0; self.np];
        let mut tmp = vec![0.0; self.dim()];
        tmp[..vel].copy_from_slice(&x[..vel]);
        let mut ax = vec![0.0; self.dim()];
        self.system.matvec_into(&tmp, &mut ax);
        for (o, a) in out.iter_mut().zip(&ax[vel..]) {
            *o = -a;
        }
        out
    }

    pub fn into_problem(self) -> FixedPointProblem {
        let n = self.dim();
        let vel = self.velocity_dim();
        let layout = FieldLayout::new(n, vec![("velocity", 0..vel), ("pressure", vel..n)])
            .expect("saddle layout is contiguous");
        FixedPointProblem::new("saddle", Arc::new(self), layout)
            .with_omega(1.0)
            .with_window(10)
    }
}

impl Residual for SaddlePoint {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.system.matvec_into(x, out);
        for (o, r) in out.iter_mut().zip(&self.rhs) {
            *o -= r;
        }
        let vel = self.velocity_dim();
        let scale = -1.0 / (self.h * self.h);
        self.velocity_factor.solve_in_place(&mut out[..vel]);
        for o in &mut out[vel..] {
            *o *= scale;
        }
    }
}

/// Builds the staggered-grid Stokes problem with `grid.points()` nodes per
/// side.
pub fn make_saddle_point(grid: GridSpec) -> Result<FixedPointProblem> {
    Ok(SaddlePoint::new(grid)?.into_problem())
}
