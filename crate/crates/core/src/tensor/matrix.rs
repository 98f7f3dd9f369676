//! Small dense row-major matrices and the handful of kernels the solver needs.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;
use crate::tensor::TensorError;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::LengthMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self, TensorError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(TensorError::LengthMismatch { expected: rows, found: bad.len() });
        }
        Ok(Self::from_fn(rows, cols, |r, c| columns[c][r]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[T]) {
        for (r, &v) in values.iter().enumerate() {
            self[(r, c)] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Self {
        let f = self.cols;
        let mut g = Self::zeros(f, f);
        for r in 0..self.rows {
            let row = self.row(r);
            for a in 0..f {
                for b in a..f {
                    g.data[a * f + b] += row[a] * row[b];
                }
            }
        }
        g.symmetrize_upper();
        g
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self, TensorError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(TensorError::ShapeMismatch(format!(
                "hadamard of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Copies the upper triangle onto the lower one.
    pub(crate) fn symmetrize_upper(&mut self) {
        let n = self.rows;
        for a in 0..n {
            for b in 0..a {
                self.data[a * n + b] = self.data[b * n + a];
            }
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Column-wise Kronecker product: column `f` of the result is `p[:, f] ⊗ q[:, f]`,
/// so row `r·n + s` holds `p[r, f]·q[s, f]`.
pub fn khatri_rao<T: Scalar>(p: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>, TensorError> {
    if p.cols() != q.cols() {
        return Err(TensorError::ShapeMismatch(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            p.cols(),
            q.cols()
        )));
    }
    let (m, n, f) = (p.rows(), q.rows(), p.cols());
    Ok(Matrix::from_fn(m * n, f, |row, c| p[(row / n, c)] * q[(row % n, c)]))
}

/// In-place Cholesky factor of a symmetric positive definite matrix (lower triangle).
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `g`. Returns `None` when a pivot is not strictly positive.
    pub fn factor(g: &Matrix<T>) -> Option<Self> {
        let n = g.rows();
        debug_assert_eq!(n, g.cols());
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = g[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = g[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, lower: l })
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

/// Adds `lambda` to the diagonal where `lambda = rel · mean(diag(g))`, falling
/// back to `T::epsilon()` for an all-zero diagonal. Returns the damping used.
pub fn damp_diagonal<T: Scalar>(g: &mut Matrix<T>, rel: T) -> T {
    let n = g.rows();
    if n == 0 {
        return T::zero();
    }
    let mean = (0..n).map(|i| g[(i, i)]).sum::<T>() / T::of(n as f64);
    let mut lambda = rel * mean;
    if !(lambda > T::zero()) {
        lambda = T::epsilon();
    }
    for i in 0..n {
        g[(i, i)] += lambda;
    }
    lambda
}
