//! Row-masked tall-skinny least squares via Householder QR, and the
//! inverse-power estimate of the smallest singular value of the retained
//! triangular factor.
//!
//! The hot path ([`QrWorkspace::solve_masked`], [`estimate_sigma_min_into`])
//! never allocates: the selected rows are gathered into a scratch buffer sized
//! once for the largest system, and the caller's matrix is left untouched.

use serde::{Deserialize, Serialize};

use crate::dense::ColMatrix;
use crate::error::{AapError, Result};

/// Relative threshold on `|r_ii| / max |r_jj|` below which a factor is
/// treated as singular.
pub const RANK_TOL: f64 = 1e-14;

/// Upper-triangular `c x c` factor, column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangularFactor {
    c: usize,
    data: Vec<f64>,
}

impl TriangularFactor {
    /// Takes the upper triangle of a square matrix.
    pub fn from_upper(m: &ColMatrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "triangular factor must be square");
        let c = m.rows();
        let mut data = vec![0.0; c * c];
        for j in 0..c {
            for i in 0..=j {
                data[j * c + i] = m[(i, j)];
            }
        }
        Self { c, data }
    }

    pub fn dim(&self) -> usize {
        self.c
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.c + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> ColMatrix {
        ColMatrix::from_col_major(self.c, self.c, self.data.clone())
    }
}

/// Scratch space for repeated masked QR solves.
#[derive(Debug, Clone)]
pub struct QrWorkspace {
    a: Vec<f64>,
    rhs: Vec<f64>,
    tau: Vec<f64>,
    max_rows: usize,
    max_cols: usize,
    // shape of the last factorization
    rows: usize,
    cols: usize,
}

impl QrWorkspace {
    pub fn new(max_rows: usize, max_cols: usize) -> Self {
        Self {
            a: vec![0.0; max_rows * max_cols],
            rhs: vec![0.0; max_rows],
            tau: vec![0.0; max_cols],
            max_rows,
            max_cols,
            rows: 0,
            cols: 0,
        }
    }

    pub fn capacity(&self) -> (usize, usize) {
        (self.max_rows, self.max_cols)
    }

    /// Solves `min || M a - b ||` where `M` is made of the `rows` of the first
    /// `cols` columns of `matrix` (column-major, leading dimension `ld`) and
    /// `b` the same rows of `rhs`. `rows = None` selects every row.
    ///
    /// On success `alpha[..cols]` holds the solution and [`Self::r`] the
    /// triangular factor of `M`.
    pub fn solve_masked(
        &mut self,
        matrix: &[f64],
        ld: usize,
        cols: usize,
        rhs: &[f64],
        rows: Option<&[usize]>,
        alpha: &mut [f64],
    ) -> Result<()> {
        let nrows = rows.map_or(ld, |r| r.len());
        assert!(cols >= 1 && cols <= self.max_cols, "column count out of range");
        assert!(nrows >= 1 && nrows <= self.max_rows, "row count out of range");
        assert!(matrix.len() >= ld * cols && rhs.len() >= ld);
        assert!(alpha.len() >= cols);

        // gather the selected rows
        for j in 0..cols {
            let src = &matrix[j * ld..(j + 1) * ld];
            let dst = &mut self.a[j * nrows..(j + 1) * nrows];
            match rows {
                None => dst.copy_from_slice(src),
                Some(idx) => {
                    for (d, &i) in dst.iter_mut().zip(idx) {
                        *d = src[i];
                    }
                }
            }
        }
        match rows {
            None => self.rhs[..nrows].copy_from_slice(&rhs[..ld]),
            Some(idx) => {
                for (d, &i) in self.rhs[..nrows].iter_mut().zip(idx) {
                    *d = rhs[i];
                }
            }
        }
        self.rows = nrows;
        self.cols = cols;

        householder_in_place(&mut self.a[..nrows * cols], nrows, cols, &mut self.tau[..cols]);
        apply_qt(&self.a[..nrows * cols], nrows, cols, &self.tau[..cols], &mut self.rhs[..nrows]);
        check_rank(&self.a, nrows, cols.min(nrows))?;
        if nrows < cols {
            return Err(AapError::RankDeficient {
                index: nrows,
                value: 0.0,
                max: 0.0,
            });
        }

        // back substitution R alpha = (Q^T b)[..cols]
        let a = &self.a;
        for i in (0..cols).rev() {
            let mut s = self.rhs[i];
            for j in i + 1..cols {
                s -= a[j * nrows + i] * alpha[j];
            }
            alpha[i] = s / a[i * nrows + i];
        }
        Ok(())
    }

    /// Entry `(i, j)` of the last triangular factor (`i <= j < cols`).
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= j && j < self.cols);
        self.a[j * self.rows + i]
    }

    /// Columns of the last factorization.
    pub fn last_cols(&self) -> usize {
        self.cols
    }

    /// Copies the last `R` into `dst` (column-major, leading dimension `ld`).
    pub fn copy_r_into(&self, dst: &mut [f64], ld: usize) {
        let c = self.cols;
        for j in 0..c {
            for i in 0..c {
                dst[j * ld + i] = if i <= j { self.r(i, j) } else { 0.0 };
            }
        }
    }

    pub fn triangular_factor(&self) -> TriangularFactor {
        let c = self.cols;
        let mut data = vec![0.0; c * c];
        self.copy_r_into(&mut data, c);
        TriangularFactor { c, data }
    }
}

/// LAPACK-style Householder QR without pivoting. `a` is `rows x cols`,
/// column-major; on exit its upper triangle is `R` and the reflectors are
/// stored below the diagonal with an implicit unit head.
pub fn householder_in_place(a: &mut [f64], rows: usize, cols: usize, tau: &mut [f64]) {
    let steps = cols.min(rows);
    for k in 0..steps {
        let (head, tail) = a.split_at_mut((k + 1) * rows);
        let col = &mut head[k * rows..];
        let alpha = col[k];
        let xnorm = col[k + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            tau[k] = 0.0;
            continue;
        }
        let beta = -alpha.signum() * alpha.hypot(xnorm);
        tau[k] = (beta - alpha) / beta;
        let scale = 1.0 / (alpha - beta);
        for v in &mut col[k + 1..] {
            *v *= scale;
        }
        col[k] = beta;

        let v = &col[k + 1..];
        let t = tau[k];
        for j in 0..cols - k - 1 {
            let cj = &mut tail[j * rows..(j + 1) * rows];
            let mut w = cj[k];
            for (ci, vi) in cj[k + 1..].iter().zip(v) {
                w += vi * ci;
            }
            w *= t;
            cj[k] -= w;
            for (ci, vi) in cj[k + 1..].iter_mut().zip(v) {
                *ci -= w * vi;
            }
        }
    }
    for t in tau.iter_mut().take(cols).skip(steps) {
        *t = 0.0;
    }
}

/// `b <- Q^T b` using the reflectors left by [`householder_in_place`].
pub fn apply_qt(a: &[f64], rows: usize, cols: usize, tau: &[f64], b: &mut [f64]) {
    for k in 0..cols.min(rows) {
        if tau[k] == 0.0 {
            continue;
        }
        let v = &a[k * rows + k + 1..(k + 1) * rows];
        let mut w = b[k];
        for (bi, vi) in b[k + 1..].iter().zip(v) {
            w += vi * bi;
        }
        w *= tau[k];
        b[k] -= w;
        for (bi, vi) in b[k + 1..].iter_mut().zip(v) {
            *bi -= w * vi;
        }
    }
}

fn check_rank(a: &[f64], rows: usize, c: usize) -> Result<()> {
    let max = (0..c).map(|i| a[i * rows + i].abs()).fold(0.0, f64::max);
    for i in 0..c {
        let v = a[i * rows + i].abs();
        if !(v >= RANK_TOL * max) || max == 0.0 {
            return Err(AapError::RankDeficient { index: i, value: v, max });
        }
    }
    Ok(())
}

/// Allocating front end: restricts `matrix` to `rows` (all rows if `None`)
/// and its first `c` columns, and returns the least-squares weights together
/// with the triangular factor. The input is not modified.
pub fn qr_masked_solve(
    matrix: &ColMatrix,
    rhs: &[f64],
    rows: Option<&[usize]>,
    c: usize,
) -> Result<(Vec<f64>, TriangularFactor)> {
    assert!(c <= matrix.cols());
    assert_eq!(rhs.len(), matrix.rows());
    if let Some(r) = rows {
        if r.is_empty() {
            return Err(AapError::InvalidMask("empty row set".into()));
        }
        if r.windows(2).any(|w| w[0] >= w[1]) || r.iter().any(|&i| i >= matrix.rows()) {
            return Err(AapError::InvalidMask("row indices must be strictly increasing and in range".into()));
        }
    }
    let nrows = rows.map_or(matrix.rows(), |r| r.len());
    let mut ws = QrWorkspace::new(nrows, c.max(1));
    let mut alpha = vec![0.0; c];
    ws.solve_masked(matrix.as_slice(), matrix.rows(), c, rhs, rows, &mut alpha)?;
    Ok((alpha, ws.triangular_factor()))
}

/// Inverse power iteration on `R^T R` starting from the normalized all-ones
/// vector; returns `sqrt` of the reciprocal Rayleigh quotient after `iters`
/// applications of `(R^T R)^{-1}`.
///
/// `r` is column-major with leading dimension `ld`; `work` needs `2 c` entries.
pub fn estimate_sigma_min_into(
    r: &[f64],
    ld: usize,
    c: usize,
    iters: usize,
    work: &mut [f64],
) -> Result<f64> {
    assert!(c >= 1 && iters >= 1);
    let max = (0..c).map(|i| r[i * ld + i].abs()).fold(0.0, f64::max);
    for i in 0..c {
        let v = r[i * ld + i].abs();
        if !(v >= RANK_TOL * max) || max == 0.0 {
            return Err(AapError::RankDeficient { index: i, value: v, max });
        }
    }
    let (v, z) = work[..2 * c].split_at_mut(c);
    let start = 1.0 / (c as f64).sqrt();
    v.fill(start);
    let mut rayleigh = 0.0;
    for it in 0..iters {
        // R^T w = v (forward), then R z = w (backward)
        for i in 0..c {
            let mut s = v[i];
            for k in 0..i {
                s -= r[i * ld + k] * z[k];
            }
            z[i] = s / r[i * ld + i];
        }
        for i in (0..c).rev() {
            let mut s = z[i];
            for k in i + 1..c {
                s -= r[k * ld + i] * z[k];
            }
            z[i] = s / r[i * ld + i];
        }
        let vz: f64 = v.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        rayleigh = vz / vv;
        if it + 1 < iters {
            let nz = z.iter().map(|a| a * a).sum::<f64>().sqrt();
            for (vi, zi) in v.iter_mut().zip(z.iter()) {
                *vi = zi / nz;
            }
        }
    }
    Ok((1.0 / rayleigh).sqrt())
}

/// Estimate of `sigma_min(R)` after `iters` (1..=5 in the solver) inverse
/// power iterations on `R^T R`.
pub fn estimate_sigma_min(r: &TriangularFactor, iters: usize) -> Result<f64> {
    let mut work = vec![0.0; 2 * r.dim()];
    estimate_sigma_min_into(&r.data, r.c, r.c, iters, &mut work)
}
