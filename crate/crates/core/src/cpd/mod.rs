//! Canonical polyadic decomposition: the factor model, ALS fitting on full or
//! partially observed tensors, alignment of estimated factors against a
//! reference, and rank sweeps.

mod align;
mod als;
mod record;
mod seed;
mod sweep;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Matrix, Mode, Tensor3, TensorError};

pub use align::{align_factors, Alignment};
pub use als::{als_fit, als_fit_from, masked_als_fit, masked_als_fit_from};
pub use record::{read_fit_record, write_fit_record};
pub use sweep::{rank_sweep, RankPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),
    #[error("input tensor has non-finite observed entries")]
    NonFiniteInput,
    #[error("mask has no observed entries")]
    EmptyMask,
    #[error("factor shapes inconsistent: {0}")]
    Shape(String),
    #[error("solver produced non-finite factors")]
    Diverged,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Factor matrices `A (I×F)`, `B (J×F)`, `C (K×F)` of a rank-`F` model.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdFactors<T> {
    factors: [Matrix<T>; 3],
}

impl<T: Scalar> CpdFactors<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>, c: Matrix<T>) -> Result<Self, FitError> {
        let rank = a.cols();
        if rank == 0 {
            return Err(FitError::ZeroRank);
        }
        if b.cols() != rank || c.cols() != rank {
            return Err(FitError::Shape(format!(
                "column counts {}, {}, {} differ",
                a.cols(),
                b.cols(),
                c.cols()
            )));
        }
        if a.rows() == 0 || b.rows() == 0 || c.rows() == 0 {
            return Err(FitError::Shape("factor matrices need at least one row".into()));
        }
        Ok(Self { factors: [a, b, c] })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].cols()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.factors[0].rows(), self.factors[1].rows(), self.factors[2].rows())
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.factors[0]
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.factors[1]
    }

    pub fn c(&self) -> &Matrix<T> {
        &self.factors[2]
    }

    pub fn factor(&self, mode: Mode) -> &Matrix<T> {
        &self.factors[mode_index(mode)]
    }

    pub(crate) fn into_parts(self) -> [Matrix<T>; 3] {
        self.factors
    }

    pub(crate) fn from_parts(factors: [Matrix<T>; 3]) -> Self {
        Self { factors }
    }

    /// `X(i,j,k) = Σ_f A(i,f)·B(j,f)·C(k,f)`.
    pub fn reconstruct(&self) -> Tensor3<T> {
        let [a, b, c] = &self.factors;
        let f = self.rank();
        let mut ab = vec![T::zero(); f];
        Tensor3::from_fn(self.dims(), |i, j, k| {
            let (ra, rb, rc) = (a.row(i), b.row(j), c.row(k));
            for r in 0..f {
                ab[r] = ra[r] * rb[r];
            }
            ab.iter().zip(rc).map(|(&x, &y)| x * y).sum()
        })
        .expect("factor rows are nonempty")
    }

    /// Scales columns of `A` and `B` to unit norm, moving magnitudes into `C`,
    /// and makes the first nonzero entry of each `A` column positive.
    pub fn normalize(&mut self) {
        let f = self.rank();
        for col in 0..f {
            for m in 0..2 {
                let norm = column_norm(&self.factors[m], col);
                if norm > T::zero() {
                    scale_column(&mut self.factors[m], col, T::one() / norm);
                    scale_column(&mut self.factors[2], col, norm);
                }
            }
            let first = self.factors[0].column(col).into_iter().find(|v| *v != T::zero());
            if first.is_some_and(|v| v < T::zero()) {
                scale_column(&mut self.factors[0], col, -T::one());
                scale_column(&mut self.factors[2], col, -T::one());
            }
        }
    }

    /// Columns where any factor column is identically zero.
    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.rank())
            .filter(|&col| self.factors.iter().any(|m| column_norm(m, col) == T::zero()))
            .collect()
    }

    /// Applies a column permutation (`out[:, f] = self[:, perm[f]]`) and per-mode
    /// column scalings.
    pub fn permute_and_scale(&self, perm: &[usize], scalings: &[Vec<T>; 3]) -> Result<Self, FitError> {
        let f = self.rank();
        if perm.len() != f || scalings.iter().any(|s| s.len() != f) {
            return Err(FitError::Shape("permutation/scaling length differs from rank".into()));
        }
        let mut seen = vec![false; f];
        for &p in perm {
            if p >= f || std::mem::replace(&mut seen[p], true) {
                return Err(FitError::Shape(format!("{perm:?} is not a permutation")));
            }
        }
        let parts = std::array::from_fn(|m| {
            let src = &self.factors[m];
            Matrix::from_fn(src.rows(), f, |r, c| src[(r, perm[c])] * scalings[m][c])
        });
        Ok(Self { factors: parts })
    }
}

/// Solver settings shared by [`als_fit`] and [`masked_als_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_sweeps: usize,
    /// Stop once the relative objective decrease of a sweep drops below this.
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Standard deviation of the random initial factor entries. `None` picks
    /// `0.1 · (‖X_obs‖_F / √n_obs)^{1/3}`.
    pub init_scale: Option<f64>,
    pub init: InitStrategy,
    /// Weight of the factor-norm penalty relative to `‖X_obs‖_F^{4/3}`; zero
    /// fits the plain least-squares objective.
    pub ridge: f64,
}

/// How masked fits choose their starting factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Random factors for every restart.
    Random,
    /// Restart `r` fits the `r mod n`-th of the `n` fully observed,
    /// generically identifiable sub-blocks of the mask (largest first) from a
    /// random start and continues from those factors, zero outside the block.
    /// Falls back to [`InitStrategy::Random`] when the mask has no such block.
    #[default]
    CompleteBlock,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_sweeps: 500, rel_tol: 1e-9, restarts: 5, seed: 0, init_scale: None, init: InitStrategy::default(), ridge: 0.0 }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_sweeps < 1 {
            return Err(FitError::InvalidOptions("max_sweeps must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(FitError::InvalidOptions("rel_tol must be > 0".into()));
        }
        if self.restarts < 1 {
            return Err(FitError::InvalidOptions("restarts must be >= 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(FitError::InvalidOptions("ridge must be finite and >= 0".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(FitError::InvalidOptions("init_scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of a fit: the best restart's factors and its objective history.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub factors: CpdFactors<T>,
    /// Objective after initialization followed by one value per accepted sweep,
    /// including the ridge penalty when one is set.
    pub objective_trace: Vec<T>,
    pub converged: bool,
    pub sweeps_used: usize,
    pub restart_index: usize,
    /// Final objective of every restart, in restart order.
    pub restart_objectives: Vec<T>,
    /// Factor rows with no observed entry, per mode. Their values are zero and
    /// carry no information.
    pub undetermined: [Vec<usize>; 3],
}

impl<T: Scalar> FitResult<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    pub fn reconstruct(&self) -> Tensor3<T> {
        self.factors.reconstruct()
    }
}

pub(crate) fn mode_index(mode: Mode) -> usize {
    mode.number() as usize - 1
}

pub(crate) fn column_norm<T: Scalar>(m: &Matrix<T>, col: usize) -> T {
    (0..m.rows()).map(|r| m[(r, col)] * m[(r, col)]).sum::<T>().sqrt()
}

fn scale_column<T: Scalar>(m: &mut Matrix<T>, col: usize, s: T) {
    for r in 0..m.rows() {
        m[(r, col)] *= s;
    }
}
