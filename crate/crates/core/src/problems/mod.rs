//! Built-in desk-scale test problems.
//!
//! * `linear`: seeded SPD system, `T(x) = A x - b`.
//! * `saddle`: Stokes-like block system on a staggered grid, preconditioned
//!   Richardson residual.
//! * `plaplace`: finite-difference q-Laplacian with a Laplace-stabilized
//!   quasi-Newton residual.
//! * `bidomain`: two-potential reaction-diffusion system, first implicit
//!   Euler step.

mod bidomain;
mod linear;
mod plaplace;
mod saddle;
pub mod sparse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AapError, Result};
use crate::fixed_point::FixedPointProblem;

pub use bidomain::{make_bidomain_toy, BidomainParams, BidomainToy};
pub use linear::{make_linear, LinearProblem};
pub use plaplace::{make_p_laplacian, PLaplacian, PLaplacianInit, DEFAULT_BETA, DEFAULT_Q, GRADIENT_REGULARIZATION};
pub use saddle::{make_saddle_point, SaddlePoint, MAX_SADDLE_POINTS};

/// Uniform grid on the unit interval or square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    dims: usize,
    points: usize,
}

impl GridSpec {
    pub fn new(dims: usize, points: usize) -> Result<Self> {
        if !(1..=2).contains(&dims) {
            return Err(AapError::InvalidConfig(format!("grid must be 1D or 2D, got {dims}D")));
        }
        if points < 3 {
            return Err(AapError::InvalidConfig(format!(
                "grid needs at least 3 points per side, got {points}"
            )));
        }
        Ok(Self { dims, points })
    }

    pub fn square(points: usize) -> Result<Self> {
        Self::new(2, points)
    }

    pub fn line(points: usize) -> Result<Self> {
        Self::new(1, points)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Grid spacing `1 / (points - 1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.points - 1) as f64
    }
}

/// Names under which the built-in problems are registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Linear,
    Saddle,
    PLaplace,
    Bidomain,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Linear,
        ProblemKind::Saddle,
        ProblemKind::PLaplace,
        ProblemKind::Bidomain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Linear => "linear",
            ProblemKind::Saddle => "saddle",
            ProblemKind::PLaplace => "plaplace",
            ProblemKind::Bidomain => "bidomain",
        }
    }

    /// Field names usable as static masks.
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            ProblemKind::Linear => &["x"],
            ProblemKind::Saddle => &["velocity", "pressure"],
            ProblemKind::PLaplace => &["u"],
            ProblemKind::Bidomain => &["extracellular", "intracellular"],
        }
    }

    /// Smallest size used by the test suites.
    pub fn smallest_size(self) -> usize {
        match self {
            ProblemKind::Linear => 20,
            ProblemKind::Saddle => 9,
            ProblemKind::PLaplace => 9,
            ProblemKind::Bidomain => 9,
        }
    }

    /// Largest alternation worth sweeping.
    pub fn max_alternation(self) -> usize {
        match self {
            ProblemKind::Bidomain => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = AapError;
    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AapError::InvalidConfig(format!("unknown problem `{s}` (expected linear, saddle, plaplace or bidomain)")))
    }
}

/// Construction options shared by the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOptions {
    /// Seed of the random linear system.
    pub seed: u64,
    /// Exponent of the q-Laplacian.
    pub q: f64,
    /// Stabilization of the q-Laplacian residual.
    pub beta: f64,
    /// Spatial dimension of the q-Laplacian grid.
    pub plaplace_dims: usize,
    pub plaplace_init: PLaplacianInit,
    pub bidomain: BidomainParams,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            q: DEFAULT_Q,
            beta: DEFAULT_BETA,
            plaplace_dims: 2,
            plaplace_init: PLaplacianInit::Zero,
            bidomain: BidomainParams::default(),
        }
    }
}

/// Builds a registered problem. `size` is the dimension for `linear` and
/// the number of grid points per side otherwise.
pub fn build_problem(kind: ProblemKind, size: usize, opts: &ProblemOptions) -> Result<FixedPointProblem> {
    match kind {
        ProblemKind::Linear => make_linear(size, opts.seed),
        ProblemKind::Saddle => make_saddle_point(GridSpec::square(size)?),
        ProblemKind::PLaplace => {
            let grid = GridSpec::new(opts.plaplace_dims, size)?;
            Ok(PLaplacian::new(grid, opts.q, opts.beta)?.into_problem(opts.plaplace_init))
        }
        ProblemKind::Bidomain => Ok(BidomainToy::new(GridSpec::square(size)?, opts.bidomain.clone())?.into_problem()),
    }
}

/// Five-point Laplacian stencil `(4 u_P - sum u_nb)` on an `nx x ny` block of
/// unknowns, `index(i, j) = offset + j * nx + i`. Missing neighbours in `x`
/// are homogeneous Dirichlet values on the nodes; in `y` the boundary
/// treatment is selected per wall.
pub(crate) fn stencil_block(
    triplets: &mut Vec<(usize, usize, f64)>,
    offset: usize,
    nx: usize,
    ny: usize,
    y_wall_diag: f64,
    x_wall_diag: f64,
) {
    for j in 0..ny {
        for i in 0..nx {
            let p = offset + j * nx + i;
            let mut diag = 4.0;
            if i > 0 {
                triplets.push((p, p - 1, -1.0));
            } else {
                diag += x_wall_diag;
            }
            if i + 1 < nx {
                triplets.push((p, p + 1, -1.0));
            } else {
                diag += x_wall_diag;
            }
            if j > 0 {
                triplets.push((p, p - nx, -1.0));
            } else {
                diag += y_wall_diag;
            }
            if j + 1 < ny {
                triplets.push((p, p + nx, -1.0));
            } else {
                diag += y_wall_diag;
            }
            triplets.push((p, p, diag));
        }
    }
}
