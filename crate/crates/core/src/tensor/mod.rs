//! Dense third-order tensors, observation masks, and the slab/fiber/unfolding
//! algebra used throughout the crate.
//!
//! Entries are addressed by zero-based `(i, j, k)`. Storage keeps `i` fastest,
//! then `j`, then `k`; the text and binary formats list values in that order.
//!
//! Unfoldings follow a cyclic column convention:
//!
//! | mode | shape        | column of entry `(i, j, k)` |
//! |------|--------------|-----------------------------|
//! | 1    | `I × (J·K)`  | `j + J·k`                   |
//! | 2    | `J × (K·I)`  | `k + K·i`                   |
//! | 3    | `K × (I·J)`  | `i + I·j`                   |
//!
//! With this convention `unfold(a∘b∘c, 1) = a·khatri_rao(c, b)ᵀ`,
//! `unfold(a∘b∘c, 2) = b·khatri_rao(a, c)ᵀ` and `unfold(a∘b∘c, 3) = c·khatri_rao(b, a)ᵀ`.

mod io;
mod matrix;

use thiserror::Error;

use crate::scalar::Scalar;

pub use io::{read_binary, read_text, write_binary, write_text, TENSOR_BINARY_MAGIC};
pub use matrix::{damp_diagonal, khatri_rao, Cholesky, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("tensor dimensions must be positive, got {0}x{1}x{2}")]
    EmptyDims(usize, usize, usize),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid mode {0}; expected 1, 2 or 3")]
    InvalidMode(u8),
    #[error("index {index} out of range for dimension of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("reference tensor has zero Frobenius norm")]
    ZeroNorm,
    #[error("mask entries must be 0 or 1, found {0}")]
    NonBinaryMask(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

pub type Dims = (usize, usize, usize);

/// Unfolding mode (1, 2 or 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn from_number(m: u8) -> Result<Self, TensorError> {
        match m {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(TensorError::InvalidMode(other)),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Mode::One => 1,
            Mode::Two => 2,
            Mode::Three => 3,
        }
    }
}

/// Which index a slab fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabKind {
    /// `X(i, :, :)`, a `J × K` matrix.
    Horizontal,
    /// `X(:, j, :)`, an `I × K` matrix.
    Vertical,
    /// `X(:, :, k)`, an `I × J` matrix.
    Frontal,
}

/// Dense real `I × J × K` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(dims: Dims) -> Result<Self, TensorError> {
        check_dims(dims)?;
        Ok(Self { dims, data: vec![T::zero(); dims.0 * dims.1 * dims.2] })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self, TensorError> {
        check_dims(dims)?;
        let (ni, nj, nk) = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Wraps values given in storage order (`i` fastest, then `j`, then `k`).
    pub fn from_storage(dims: Dims, data: Vec<T>) -> Result<Self, TensorError> {
        check_dims(dims)?;
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch { expected, found: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values in storage order.
    pub fn storage(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Checked access.
    pub fn try_get(&self, i: usize, j: usize, k: usize) -> Result<T, TensorError> {
        check_index(i, self.dims.0)?;
        check_index(j, self.dims.1)?;
        check_index(k, self.dims.2)?;
        Ok(self.get(i, j, k))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Outer product `a ∘ b ∘ c`.
    pub fn rank_one(a: &[T], b: &[T], c: &[T]) -> Result<Self, TensorError> {
        Self::from_fn((a.len(), b.len(), c.len()), |i, j, k| a[i] * b[j] * c[k])
    }

    /// Mode-`n` matricization; see the module docs for the column order.
    pub fn unfold(&self, mode: Mode) -> Matrix<T> {
        let (ni, nj, nk) = self.dims;
        match mode {
            Mode::One => Matrix::from_fn(ni, nj * nk, |i, col| self.get(i, col % nj, col / nj)),
            Mode::Two => Matrix::from_fn(nj, nk * ni, |j, col| self.get(col / nk, j, col % nk)),
            Mode::Three => Matrix::from_fn(nk, ni * nj, |k, col| self.get(col % ni, col / ni, k)),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn refold(m: &Matrix<T>, mode: Mode, dims: Dims) -> Result<Self, TensorError> {
        check_dims(dims)?;
        let (ni, nj, nk) = dims;
        let expected = match mode {
            Mode::One => (ni, nj * nk),
            Mode::Two => (nj, nk * ni),
            Mode::Three => (nk, ni * nj),
        };
        if (m.rows(), m.cols()) != expected {
            return Err(TensorError::ShapeMismatch(format!(
                "mode-{} unfolding of {ni}x{nj}x{nk} must be {}x{}, got {}x{}",
                mode.number(),
                expected.0,
                expected.1,
                m.rows(),
                m.cols()
            )));
        }
        Self::from_fn(dims, |i, j, k| match mode {
            Mode::One => m[(i, j + nj * k)],
            Mode::Two => m[(j, k + nk * i)],
            Mode::Three => m[(k, i + ni * j)],
        })
    }

    pub fn extract_slab(&self, kind: SlabKind, index: usize) -> Result<Matrix<T>, TensorError> {
        let (ni, nj, nk) = self.dims;
        Ok(match kind {
            SlabKind::Horizontal => {
                check_index(index, ni)?;
                Matrix::from_fn(nj, nk, |j, k| self.get(index, j, k))
            }
            SlabKind::Vertical => {
                check_index(index, nj)?;
                Matrix::from_fn(ni, nk, |i, k| self.get(i, index, k))
            }
            SlabKind::Frontal => {
                check_index(index, nk)?;
                Matrix::from_fn(ni, nj, |i, j| self.get(i, j, index))
            }
        })
    }

    /// Time fiber `X(i, j, :)`.
    pub fn extract_fiber(&self, i: usize, j: usize) -> Result<Vec<T>, TensorError> {
        check_index(i, self.dims.0)?;
        check_index(j, self.dims.1)?;
        Ok((0..self.dims.2).map(|k| self.get(i, j, k)).collect())
    }

    /// `‖self − estimate‖²_F / ‖self‖²_F`.
    pub fn relative_error(&self, estimate: &Self) -> Result<T, TensorError> {
        if self.dims != estimate.dims {
            return Err(TensorError::DimMismatch(self.dims, estimate.dims));
        }
        let norm = self.frobenius_sq();
        if norm == T::zero() {
            return Err(TensorError::ZeroNorm);
        }
        let resid: T = self.data.iter().zip(&estimate.data).map(|(&a, &b)| (a - b) * (a - b)).sum();
        Ok(resid / norm)
    }

    /// Converts the entry type, e.g. `f64 → f32`.
    pub fn cast<U: Scalar>(&self) -> Tensor3<U> {
        Tensor3 { dims: self.dims, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}

/// Binary observation indicator with the same shape as the tensor it masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskTensor {
    dims: Dims,
    data: Vec<bool>,
}

impl MaskTensor {
    pub fn empty(dims: Dims) -> Result<Self, TensorError> {
        check_dims(dims)?;
        Ok(Self { dims, data: vec![false; dims.0 * dims.1 * dims.2] })
    }

    pub fn full(dims: Dims) -> Result<Self, TensorError> {
        check_dims(dims)?;
        Ok(Self { dims, data: vec![true; dims.0 * dims.1 * dims.2] })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self, TensorError> {
        check_dims(dims)?;
        let (ni, nj, nk) = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Interprets a real tensor whose entries are exactly 0 or 1.
    pub fn from_tensor<T: Scalar>(t: &Tensor3<T>) -> Result<Self, TensorError> {
        let data = t
            .storage()
            .iter()
            .map(|&v| {
                if v == T::one() {
                    Ok(true)
                } else if v == T::zero() {
                    Ok(false)
                } else {
                    Err(TensorError::NonBinaryMask(v.to_string()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { dims: t.dims(), data })
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor3<T> {
        Tensor3 { dims: self.dims, data: self.data.iter().map(|&b| if b { T::one() } else { T::zero() }).collect() }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[i + self.dims.0 * (j + self.dims.1 * k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let o = i + self.dims.0 * (j + self.dims.1 * k);
        self.data[o] = v;
    }

    /// Flags in storage order.
    pub fn storage(&self) -> &[bool] {
        &self.data
    }

    pub fn count_observed(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Entrywise OR.
    pub fn union(&self, other: &Self) -> Result<Self, TensorError> {
        if self.dims != other.dims {
            return Err(TensorError::DimMismatch(self.dims, other.dims));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect();
        Ok(Self { dims: self.dims, data })
    }

    pub fn complement(&self) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&b| !b).collect() }
    }

    /// Iterates `(i, j, k)` of observed entries in storage order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (ni, nj, _) = self.dims;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(o, _)| (o % ni, (o / ni) % nj, o / (ni * nj)))
    }
}

fn check_dims(dims: Dims) -> Result<(), TensorError> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        Err(TensorError::EmptyDims(dims.0, dims.1, dims.2))
    } else {
        Ok(())
    }
}

fn check_index(index: usize, size: usize) -> Result<(), TensorError> {
    if index < size {
        Ok(())
    } else {
        Err(TensorError::IndexOutOfRange { index, size })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting(dims: Dims) -> Tensor3<f64> {
        let mut v = 0.0;
        let mut t = Tensor3::zeros(dims).unwrap();
        // Fill in i-major order so entry (i,j,k) = 1 + k + K*(j + J*i).
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                for k in 0..dims.2 {
                    v += 1.0;
                    t.set(i, j, k, v);
                }
            }
        }
        t
    }

    #[test]
    fn rank_one_zero_row_kills_slab() {
        let t = Tensor3::rank_one(&[1.0, 0.0], &[1.0, 1.0], &[1.0]).unwrap();
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.get(0, 1, 0), 1.0);
        assert_eq!(t.get(1, 0, 0), 0.0);
        assert_eq!(t.get(1, 1, 0), 0.0);
    }

    #[test]
    fn rank_one_scalar_product() {
        let t = Tensor3::rank_one(&[2.0], &[3.0], &[4.0]).unwrap();
        assert_eq!(t.storage(), &[24.0]);
    }

    #[test]
    fn rank_one_rejects_empty_vectors() {
        assert!(matches!(Tensor3::<f64>::rank_one(&[], &[1.0], &[1.0]), Err(TensorError::EmptyDims(0, 1, 1))));
    }

    #[test]
    fn mode_one_unfold_of_counting_tensor() {
        // Entries 1..8 with (i,j,k) = 1 + k + 2j + 4i. Mode-1 columns are
        // (j,k) = (0,0), (1,0), (0,1), (1,1).
        let t = counting((2, 2, 2));
        let m = t.unfold(Mode::One);
        assert_eq!(m.row(0), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(m.row(1), &[5.0, 7.0, 6.0, 8.0]);
        let m2 = t.unfold(Mode::Two);
        // Columns (k,i) = k + 2i: (0,0),(1,0),(0,1),(1,1).
        assert_eq!(m2.row(0), &[1.0, 2.0, 5.0, 6.0]);
        assert_eq!(m2.row(1), &[3.0, 4.0, 7.0, 8.0]);
        let m3 = t.unfold(Mode::Three);
        // Columns (i,j) = i + 2j.
        assert_eq!(m3.row(0), &[1.0, 5.0, 3.0, 7.0]);
        assert_eq!(m3.row(1), &[2.0, 6.0, 4.0, 8.0]);
    }

    #[test]
    fn invalid_mode_rejected() {
        assert_eq!(Mode::from_number(4), Err(TensorError::InvalidMode(4)));
        assert_eq!(Mode::from_number(0), Err(TensorError::InvalidMode(0)));
    }

    #[test]
    fn refold_rejects_wrong_shape() {
        let m = Matrix::<f64>::zeros(3, 4);
        assert!(Tensor3::refold(&m, Mode::One, (3, 2, 3)).is_err());
    }

    #[test]
    fn frontal_slab_of_rank_one() {
        let (a, b, c) = ([1.0, -2.0], [0.5, 3.0, 1.0], [2.0, 7.0]);
        let t = Tensor3::rank_one(&a, &b, &c).unwrap();
        let s = t.extract_slab(SlabKind::Frontal, 0).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(s[(i, j)], c[0] * a[i] * b[j]);
            }
        }
    }

    #[test]
    fn horizontal_slab_single_nonzero() {
        let mut t = Tensor3::<f64>::zeros((3, 4, 5)).unwrap();
        t.set(1, 2, 3, 9.0);
        let s = t.extract_slab(SlabKind::Horizontal, 1).unwrap();
        assert_eq!(s.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(s[(2, 3)], 9.0);
    }

    #[test]
    fn slab_and_fiber_reject_out_of_range() {
        let t = Tensor3::<f64>::zeros((3, 4, 5)).unwrap();
        assert!(t.extract_slab(SlabKind::Horizontal, 3).is_err());
        assert!(t.extract_slab(SlabKind::Vertical, 4).is_err());
        assert!(t.extract_slab(SlabKind::Frontal, 5).is_err());
        assert!(t.extract_fiber(3, 0).is_err());
        assert!(t.extract_fiber(0, 4).is_err());
    }

    #[test]
    fn fiber_of_rank_one_and_zero() {
        let (a, b, c) = ([1.0, 3.0], [2.0], [1.0, -1.0, 4.0]);
        let t = Tensor3::rank_one(&a, &b, &c).unwrap();
        assert_eq!(t.extract_fiber(1, 0).unwrap(), vec![6.0, -6.0, 24.0]);
        let z = Tensor3::<f64>::zeros((2, 2, 3)).unwrap();
        assert_eq!(z.extract_fiber(1, 1).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn relative_error_identities() {
        let t = counting((2, 3, 2));
        assert_eq!(t.relative_error(&t).unwrap(), 0.0);
        let zero = Tensor3::zeros(t.dims()).unwrap();
        assert_eq!(t.relative_error(&zero).unwrap(), 1.0);
        assert_eq!(t.relative_error(&t.map(|v| 2.0 * v)).unwrap(), 1.0);
        assert_eq!(zero.relative_error(&t), Err(TensorError::ZeroNorm));
    }

    #[test]
    fn mask_rejects_non_binary() {
        let t = Tensor3::from_storage((1, 1, 2), vec![1.0, 0.5]).unwrap();
        assert!(matches!(MaskTensor::from_tensor(&t), Err(TensorError::NonBinaryMask(_))));
    }

    #[test]
    fn observed_iterates_indices() {
        let mut m = MaskTensor::empty((2, 3, 4)).unwrap();
        m.set(1, 2, 3, true);
        m.set(0, 1, 0, true);
        let seen: Vec<_> = m.observed().collect();
        assert_eq!(seen, vec![(0, 1, 0), (1, 2, 3)]);
    }
}
