use crate::dense::{axpy, norm2};
use crate::error::{AapError, Result};
use crate::fixed_point::FixedPointProblem;
use crate::lsq::QrWorkspace;
use crate::sketching::{AdaptiveScratch, MaskOperator};

use super::SolverConfig;

/// All buffers used by a solve, allocated once.
///
/// `f_mat` (the field-restricted residual increments) is a shift-append
/// buffer whose columns are always in chronological order. `g_mat` (the
/// update increments, full length) is written circulantly; `perm[j]` is the
/// physical column holding the `j`-th oldest increment.
#[derive(Debug, Clone)]
pub struct Workspace {
    n: usize,
    l1: usize,
    m: usize,
    omega: f64,

    pub(crate) x: Vec<f64>,
    pub(crate) f: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) df: Vec<f64>,
    pub(crate) dg: Vec<f64>,

    static_rows: Option<StaticRows>,
    pub(crate) f_pi: Vec<f64>,
    pub(crate) df_pi: Vec<f64>,

    pub(crate) g_mat: Vec<f64>,
    pub(crate) f_mat: Vec<f64>,
    pub(crate) dx_norms: Vec<f64>,
    pub(crate) perm: Vec<usize>,
    filled: usize,
    newest: usize,

    pub(crate) qr: QrWorkspace,
    pub(crate) alpha: Vec<f64>,
    pub(crate) coef: Vec<f64>,

    pub(crate) r_stored: Option<Vec<f64>>,
    pub(crate) r_cols: usize,
    pub(crate) adaptive: Option<AdaptiveScratch>,

    pub(crate) lipschitz: f64,
}

#[derive(Debug, Clone)]
enum StaticRows {
    Range(std::ops::Range<usize>),
    Indices(Vec<usize>),
}

/// Norms produced by one increment update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementNorms {
    pub f: f64,
    pub df: f64,
    pub dx: f64,
}

/// Allocates every buffer of the two-level solver. `static_mask = None` (or
/// an identity mask) means the residual-increment matrix keeps all `n` rows.
pub fn allocate_workspace(
    n: usize,
    config: &SolverConfig,
    static_mask: Option<&MaskOperator>,
    omega: f64,
) -> Result<Workspace> {
    if n == 0 {
        return Err(AapError::InvalidConfig("problem dimension must be positive".into()));
    }
    config.validate()?;
    let static_rows = match static_mask {
        Some(mask) if mask.source_dim() != n => {
            return Err(AapError::InvalidMask(format!(
                "mask source dimension {} does not match problem dimension {n}",
                mask.source_dim()
            )))
        }
        Some(mask) if mask.is_empty() => return Err(AapError::InvalidMask("empty static mask".into())),
        Some(mask) if !mask.is_identity() => Some(match mask.as_range() {
            Some(r) => StaticRows::Range(r),
            None => StaticRows::Indices(mask.kept().to_vec()),
        }),
        _ => None,
    };
    let l1 = match &static_rows {
        None => n,
        Some(StaticRows::Range(r)) => r.len(),
        Some(StaticRows::Indices(v)) => v.len(),
    };
    if l1 == 0 {
        return Err(AapError::InvalidMask("empty static mask".into()));
    }
    let m = config.window;
    let reduced = if static_rows.is_some() { l1 } else { 0 };
    let adaptive = config.adaptivity.is_enabled();
    Ok(Workspace {
        n,
        l1,
        m,
        omega,
        x: vec![0.0; n],
        f: vec![0.0; n],
        g: vec![0.0; n],
        df: vec![0.0; n],
        dg: vec![0.0; n],
        static_rows,
        f_pi: vec![0.0; reduced],
        df_pi: vec![0.0; reduced],
        g_mat: vec![0.0; n * m],
        f_mat: vec![0.0; l1 * m],
        dx_norms: vec![0.0; m],
        perm: vec![0; m],
        filled: 0,
        newest: 0,
        qr: QrWorkspace::new(l1, m),
        alpha: vec![0.0; m],
        coef: vec![0.0; m],
        r_stored: adaptive.then(|| vec![0.0; m * m]),
        r_cols: 0,
        adaptive: adaptive.then(|| AdaptiveScratch::new(l1, m)),
        lipschitz: 0.0,
    })
}

/// `x <- x - omega f`, in place.
#[inline]
pub fn picard_update(x: &mut [f64], f: &[f64], omega: f64) {
    assert_eq!(x.len(), f.len());
    for (xi, fi) in x.iter_mut().zip(f) {
        *xi -= omega * fi;
    }
}

impl Workspace {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.m
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Rows of the residual-increment matrix.
    pub fn l1(&self) -> usize {
        self.l1
    }

    /// Shape of the residual-increment matrix `(l1, m)`.
    pub fn f_pi_shape(&self) -> (usize, usize) {
        (self.l1, self.m)
    }

    /// Shape of the update-increment matrix `(n, m)`.
    pub fn g_shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Whether the reduced residual vectors were allocated.
    pub fn has_reduced_vectors(&self) -> bool {
        self.static_rows.is_some()
    }

    /// Whether the triangular factor buffer was allocated.
    pub fn has_r(&self) -> bool {
        self.r_stored.is_some()
    }

    pub fn filled_columns(&self) -> usize {
        self.filled
    }

    pub fn newest_column(&self) -> usize {
        self.newest
    }

    /// Chronological-to-physical column map of `G` (oldest first).
    pub fn column_order(&self) -> &[usize] {
        &self.perm[..self.filled]
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn df(&self) -> &[f64] {
        &self.df
    }

    pub fn dg(&self) -> &[f64] {
        &self.dg
    }

    /// Column `j` (chronological, oldest = 0) of the residual-increment matrix.
    pub fn f_column(&self, j: usize) -> &[f64] {
        assert!(j < self.filled);
        &self.f_mat[j * self.l1..(j + 1) * self.l1]
    }

    /// Column `j` (chronological) of `G`, through the permutation.
    pub fn g_column(&self, j: usize) -> &[f64] {
        assert!(j < self.filled);
        let p = self.perm[j];
        &self.g_mat[p * self.n..(p + 1) * self.n]
    }

    /// Physical column `p` of `G`.
    pub fn g_physical_column(&self, p: usize) -> &[f64] {
        &self.g_mat[p * self.n..(p + 1) * self.n]
    }

    /// Field-restricted residual (the full residual when no static mask).
    pub fn f_restricted(&self) -> &[f64] {
        if self.static_rows.is_some() {
            &self.f_pi
        } else {
            &self.f
        }
    }

    /// First evaluation: `f = T(x0)`, `g = x0 - omega f`, then the initial
    /// Picard step `x = g`. Returns `|f|`.
    pub(crate) fn initialize(&mut self, problem: &FixedPointProblem, x0: &[f64]) -> Result<f64> {
        if x0.len() != self.n {
            return Err(AapError::DimensionMismatch {
                expected: self.n,
                got: x0.len(),
            });
        }
        self.x.copy_from_slice(x0);
        problem.evaluate_into(&self.x, &mut self.f)?;
        for ((gi, xi), fi) in self.g.iter_mut().zip(&self.x).zip(&self.f) {
            *gi = xi - self.omega * fi;
        }
        Ok(norm2(&self.f))
    }

    /// Initial Picard step.
    pub(crate) fn start(&mut self) {
        picard_update(&mut self.x, &self.f, self.omega);
    }

    /// `df <- f, dg <- g; f <- T(x), g <- x - omega f; df <- f - df,
    /// dg <- g - dg`, with exactly one residual evaluation. Returns `|f|`,
    /// `|df|` and `|dx|` where `dx = dg + omega df`.
    pub fn update_increments(&mut self, problem: &FixedPointProblem) -> Result<IncrementNorms> {
        self.df.copy_from_slice(&self.f);
        self.dg.copy_from_slice(&self.g);
        problem.evaluate_into(&self.x, &mut self.f)?;
        let omega = self.omega;
        let (mut nf, mut ndf, mut ndx) = (0.0, 0.0, 0.0);
        for i in 0..self.n {
            let fi = self.f[i];
            let gi = self.x[i] - omega * fi;
            self.g[i] = gi;
            let dfi = fi - self.df[i];
            let dgi = gi - self.dg[i];
            self.df[i] = dfi;
            self.dg[i] = dgi;
            let dxi = dgi + omega * dfi;
            nf += fi * fi;
            ndf += dfi * dfi;
            ndx += dxi * dxi;
        }
        Ok(IncrementNorms {
            f: nf.sqrt(),
            df: ndf.sqrt(),
            dx: ndx.sqrt(),
        })
    }

    /// `f_pi <- Pi_1 f`, `df_pi <- Pi_1 df` (no-op without a static mask).
    pub(crate) fn restrict(&mut self) {
        match &self.static_rows {
            None => {}
            Some(StaticRows::Range(r)) => {
                self.f_pi.copy_from_slice(&self.f[r.clone()]);
                self.df_pi.copy_from_slice(&self.df[r.clone()]);
            }
            Some(StaticRows::Indices(idx)) => {
                for (k, &i) in idx.iter().enumerate() {
                    self.f_pi[k] = self.f[i];
                    self.df_pi[k] = self.df[i];
                }
            }
        }
    }

    /// Appends the current increments for iteration `k >= 1`: the restricted
    /// residual increment is shift-appended to `F_pi`, the update increment
    /// is written into column `(k + 1) mod m` of `G`.
    pub fn push_window(&mut self, k: usize, dx_norm: f64) {
        let (l1, m) = (self.l1, self.m);
        if self.filled == m {
            self.f_mat.copy_within(l1.., 0);
            self.dx_norms.copy_within(1.., 0);
            self.perm.copy_within(1.., 0);
            self.filled -= 1;
        }
        let j = self.filled;
        let src = if self.static_rows.is_some() { &self.df_pi } else { &self.df };
        self.f_mat[j * l1..(j + 1) * l1].copy_from_slice(src);
        self.dx_norms[j] = dx_norm;

        let col = (k + 1) % m;
        self.g_mat[col * self.n..(col + 1) * self.n].copy_from_slice(&self.dg);
        self.perm[j] = col;
        self.newest = col;
        self.filled += 1;
    }

    /// `x <- x - omega f + sum_j coef_j G_j` with `coef` in chronological
    /// order.
    pub fn anderson_update(&mut self, coef: &[f64]) {
        assert_eq!(coef.len(), self.filled, "mixing weights must match the filled window");
        picard_update(&mut self.x, &self.f, self.omega);
        for (j, &c) in coef.iter().enumerate() {
            let p = self.perm[j];
            axpy(c, &self.g_mat[p * self.n..(p + 1) * self.n], &mut self.x);
        }
    }

    /// Least-squares solve on the current window with optional row subset
    /// (relative to the restricted system). Leaves the weights in `alpha`.
    pub(crate) fn solve_ls(&mut self, rows: Option<&[usize]>) -> Result<()> {
        let c = self.filled;
        let rhs = if self.static_rows.is_some() { &self.f_pi } else { &self.f };
        self.qr
            .solve_masked(&self.f_mat, self.l1, c, rhs, rows, &mut self.alpha[..c])
    }

    pub(crate) fn store_r(&mut self) {
        let c = self.qr.last_cols();
        if let Some(r) = self.r_stored.as_mut() {
            self.qr.copy_r_into(r, self.m);
            self.r_cols = c;
        }
    }

    pub(crate) fn stored_r(&self) -> Option<(&[f64], usize, usize)> {
        match &self.r_stored {
            Some(r) if self.r_cols > 0 => Some((r.as_slice(), self.m, self.r_cols)),
            _ => None,
        }
    }

    /// Current `F_pi` window as a dense matrix (diagnostics only).
    pub fn f_window(&self) -> crate::dense::ColMatrix {
        crate::dense::ColMatrix::from_col_major(
            self.l1,
            self.filled,
            self.f_mat[..self.l1 * self.filled].to_vec(),
        )
    }

}
