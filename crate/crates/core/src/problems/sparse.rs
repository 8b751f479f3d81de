//! Compressed-row matrices and a banded Cholesky factorization, enough to
//! cache direct solves for the grid operators used by the built-in problems.

use crate::dense::ColMatrix;
use crate::error::{AapError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> ColMatrix {
        let mut d = ColMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Largest `|i - j|` over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, _)| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }
}

/// Cholesky factor `A = L L^T` of a symmetric positive definite banded
/// matrix, stored row-wise as the `b + 1` entries `L[i, i-b..=i]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    b: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the lower triangle of `a`. Fails if `a` is not positive
    /// definite.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "matrix must be square");
        let n = a.rows();
        let b = a.half_bandwidth();
        let w = b + 1;
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    band[r * w + (c + b - r)] += v;
                }
            }
        }
        // L[i][j] lives at band[i * w + (j + b - i)]
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let jlo = j.saturating_sub(b).max(lo);
                let mut s = band[i * w + (j + b - i)];
                for k in jlo..j {
                    s -= band[i * w + (k + b - i)] * band[j * w + (k + b - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(AapError::InvalidConfig(format!(
                            "matrix is not positive definite (pivot {i} = {s:e})"
                        )));
                    }
                    band[i * w + b] = s.sqrt();
                } else {
                    band[i * w + (j + b - i)] = s / band[j * w + b];
                }
            }
        }
        Ok(Self { n, b, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (b, w) = (self.b, self.b + 1);
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for k in lo..i {
                s -= self.band[i * w + (k + b - i)] * x[k];
            }
            x[i] = s / self.band[i * w + b];
        }
        for i in (0..self.n).rev() {
            let hi = (i + b).min(self.n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.band[k * w + (i + b - k)] * x[k];
            }
            x[i] = s / self.band[i * w + b];
        }
    }
}
