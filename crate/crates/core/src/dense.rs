//! Small dense helpers shared by the solver, the least-squares kernels and
//! the built-in problems. Matrices are column-major.

use serde::{Deserialize, Serialize};

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from column-major data.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of rows.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(nr, nc);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), nc, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            axpy(xj, self.col(j), y);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = out.col_mut(j);
            for k in 0..self.cols {
                axpy(other[(k, j)], &self.data[k * self.rows..(k + 1) * self.rows], oc);
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }
}

impl std::ops::Index<(usize, usize)> for ColMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ColMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y = A^T x`, one contiguous dot product per column.
pub fn tr_matvec_into(a: &ColMatrix, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), a.rows());
    assert_eq!(y.len(), a.cols());
    for (j, yj) in y.iter_mut().enumerate() {
        *yj = dot(a.col(j), x);
    }
}

/// `y = A[rows, :]^T x[rows]`: the transposed product restricted to a row
/// subset, reading `A` and `x` through the index list.
pub fn masked_tr_matvec_into(a: &ColMatrix, rows: &[usize], x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), a.rows());
    assert_eq!(y.len(), a.cols());
    for (j, yj) in y.iter_mut().enumerate() {
        let col = a.col(j);
        *yj = rows.iter().map(|&i| col[i] * x[i]).sum();
    }
}

/// Copies `A[rows, :]` into `out` (column-major, `rows.len()` rows).
pub fn gather_rows_into(a: &ColMatrix, rows: &[usize], out: &mut [f64]) {
    let l = rows.len();
    assert_eq!(out.len(), l * a.cols());
    for j in 0..a.cols() {
        let col = a.col(j);
        for (o, &i) in out[j * l..(j + 1) * l].iter_mut().zip(rows) {
            *o = col[i];
        }
    }
}

/// Index of the first non-finite entry, if any.
#[inline]
pub fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_products_match_explicit_restriction() {
        let a = ColMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0], &[7.0, 8.0]]);
        let x = [1.0, -1.0, 2.0, 0.5];
        let mut full = [0.0; 2];
        tr_matvec_into(&a, &x, &mut full);
        assert_eq!(full, [1.0 - 3.0 + 10.0 + 3.5, 2.0 - 4.0 + 12.0 + 4.0]);
        let mut masked = [0.0; 2];
        masked_tr_matvec_into(&a, &[0, 2], &x, &mut masked);
        assert_eq!(masked, [11.0, 14.0]);
        masked_tr_matvec_into(&a, &[0, 1, 2, 3], &x, &mut masked);
        assert_eq!(masked, full);
        let mut g = [0.0; 4];
        gather_rows_into(&a, &[1, 3], &mut g);
        assert_eq!(g, [3.0, 7.0, 4.0, 8.0]);
    }

    #[test]
    fn matmul_and_transpose_agree() {
        let a = ColMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, 3.0]]);
        let ata = a.transpose().matmul(&a);
        assert_eq!(ata.shape(), (3, 3));
        assert_eq!(ata[(1, 2)], 3.0);
        assert_eq!(ata, ata.transpose());
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 4.0]);
    }
}
