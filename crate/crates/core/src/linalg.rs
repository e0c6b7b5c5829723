//! Small dense row-major matrices.
//!
//! Parameter dimensions here are tiny (d ≤ 10 in practice) so everything is
//! written as plain loops over a flat `Vec<f64>`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from a flat row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(alloc::format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from nested rows; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(alloc::format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; an empty-column matrix has no row content anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(alloc::format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape("matrix-vector length mismatch"));
        }
        Ok(self
            .row_iter()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape("elementwise operation on mismatched shapes"));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn frobenius(&self) -> f64 {
        math::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| if x.abs() > m { x.abs() } else { m })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest |a_ij − a_ji| relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Column means of a data matrix (rows are observations).
    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (acc, x) in m.iter_mut().zip(r) {
                *acc += x;
            }
        }
        let n = self.rows as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Unbiased sample covariance of the rows.
    pub fn sample_covariance(&self) -> Matrix {
        let mean = self.column_means();
        let d = self.cols;
        let mut c = Matrix::zeros(d, d);
        for r in self.row_iter() {
            for i in 0..d {
                let di = r[i] - mean[i];
                for j in 0..=i {
                    c[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        let denom = self.rows as f64 - 1.0;
        for i in 0..d {
            for j in 0..=i {
                let v = c[(i, j)] / denom;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Upper-triangular Cholesky factor `R` with `RᵀR = m`.
///
/// Fails with [`Error::NonPdMatrix`] at the first pivot that is not strictly
/// positive.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    factor_upper(m, false)
}

/// Cholesky factor of a positive semidefinite matrix. Pivots that fall to
/// rounding level are zeroed along with the rest of their row.
pub fn cholesky_semidefinite(m: &Matrix) -> Result<Matrix> {
    factor_upper(m, true)
}

fn factor_upper(m: &Matrix, allow_singular: bool) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::shape("Cholesky needs a square matrix"));
    }
    let d = m.rows();
    let tol = 1e-12 * m.diag().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut r = Matrix::zeros(d, d);
    for j in 0..d {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= r[(k, j)] * r[(k, j)];
        }
        if allow_singular && pivot.abs() <= tol {
            // row j stays zero
            continue;
        }
        if !pivot.is_finite() || pivot <= 0.0 {
            return Err(Error::NonPdMatrix { pivot: j });
        }
        let rjj = math::sqrt(pivot);
        r[(j, j)] = rjj;
        for i in (j + 1)..d {
            let mut s = m[(j, i)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = s / rjj;
        }
    }
    Ok(r)
}

/// Inverse of a nonsingular upper-triangular matrix.
pub fn upper_triangular_inverse(r: &Matrix) -> Result<Matrix> {
    if !r.is_square() {
        return Err(Error::shape("triangular inverse needs a square matrix"));
    }
    let d = r.rows();
    let mut inv = Matrix::zeros(d, d);
    for j in 0..d {
        if r[(j, j)] == 0.0 {
            return Err(Error::NonPdMatrix { pivot: j });
        }
    }
    // back substitution column by column: R · inv[:, c] = e_c
    for c in 0..d {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in (i + 1)..=c {
                s -= r[(i, k)] * inv[(k, c)];
            }
            inv[(i, c)] = s / r[(i, i)];
        }
    }
    Ok(inv)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor; the result is symmetrized.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let r = cholesky(m)?;
    let ri = upper_triangular_inverse(&r)?;
    // m⁻¹ = R⁻¹ R⁻ᵀ
    let mut inv = ri.matmul(&ri.transpose())?;
    symmetrize(&mut inv);
    Ok(inv)
}

pub(crate) fn symmetrize(m: &mut Matrix) {
    let d = m.rows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius() / b.frobenius())
}
