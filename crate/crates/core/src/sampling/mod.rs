//! Structured observation masks and their identifiability certificates.
//!
//! Slab sampling observes whole horizontal slabs (fully instrumented phases)
//! and whole frontal slabs (complete snapshots at chosen times). Fiber
//! sampling observes two rectangles of `(phase, measurement)` pairs across all
//! time steps.
//!
//! The certificates are cardinality inequalities. Every floor operator in
//! them is evaluated as `⌊log₂ n⌋`; with that reading the slab condition at
//! rank 11 on a `263 × 5 × 72` tensor gives exactly `I_h ≥ 16, K_f ≥ 3`, and
//! the fiber condition at rank 8 gives `|S_r| ≥ 16`. A plain arithmetic floor
//! reproduces neither.
//!
//! For a `263 × 5 × 72` tensor the generic uniqueness bound evaluates to
//! `2^{6+2−2} = 64` (not 32).
//!
//! All checks assume factors drawn from an absolutely continuous
//! distribution; that cannot be verified from a single instance and is only
//! stated in the reports.

mod conditions;
mod masks;
mod scheme_file;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::tensor::{Dims, TensorError};

pub use conditions::{
    check_fiber_conditions, check_slab_conditions, floor_log2, generic_identifiability, min_slab_requirements, Clause,
    IdentifiabilityReport, Relation, SlabRequirements,
};
pub use masks::{build_fiber_mask, build_slab_mask, build_vertical_mask, equally_spaced, sampling_fraction};
pub use scheme_file::{parse_scheme, write_scheme, Scheme};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("{axis} index {index} out of range (size {size})")]
    IndexOutOfRange { axis: &'static str, index: usize, size: usize },
    #[error("no sampling pair up to ({max_ih}, {max_kf}) satisfies the slab conditions at rank {rank}")]
    Infeasible { rank: usize, max_ih: usize, max_kf: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Sampled horizontal (phase) and frontal (time) slab indices, zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlabScheme {
    dims: Dims,
    horizontal: BTreeSet<usize>,
    frontal: BTreeSet<usize>,
}

impl SlabScheme {
    pub fn new(
        dims: Dims,
        horizontal: impl IntoIterator<Item = usize>,
        frontal: impl IntoIterator<Item = usize>,
    ) -> Result<Self, SamplingError> {
        let horizontal = collect_checked(horizontal, dims.0, "phase")?;
        let frontal = collect_checked(frontal, dims.2, "time")?;
        Ok(Self { dims, horizontal, frontal })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn horizontal(&self) -> &BTreeSet<usize> {
        &self.horizontal
    }

    pub fn frontal(&self) -> &BTreeSet<usize> {
        &self.frontal
    }

    /// `I_h`.
    pub fn num_horizontal(&self) -> usize {
        self.horizontal.len()
    }

    /// `K_f`.
    pub fn num_frontal(&self) -> usize {
        self.frontal.len()
    }
}

/// One fiber pattern: every `(i, j)` with `i ∈ rows`, `j ∈ cols` is observed
/// at all time steps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FiberPattern {
    pub rows: BTreeSet<usize>,
    pub cols: BTreeSet<usize>,
}

/// Two fiber patterns over an `I × J × K` tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberScheme {
    dims: Dims,
    patterns: [FiberPattern; 2],
}

impl FiberScheme {
    pub fn new(dims: Dims, patterns: [(Vec<usize>, Vec<usize>); 2]) -> Result<Self, SamplingError> {
        let mut out: [FiberPattern; 2] = Default::default();
        for (slot, (rows, cols)) in out.iter_mut().zip(patterns) {
            slot.rows = collect_checked(rows, dims.0, "phase")?;
            slot.cols = collect_checked(cols, dims.1, "measurement")?;
        }
        Ok(Self { dims, patterns: out })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn patterns(&self) -> &[FiberPattern; 2] {
        &self.patterns
    }
}

fn collect_checked(
    items: impl IntoIterator<Item = usize>,
    size: usize,
    axis: &'static str,
) -> Result<BTreeSet<usize>, SamplingError> {
    items
        .into_iter()
        .map(|index| if index < size { Ok(index) } else { Err(SamplingError::IndexOutOfRange { axis, index, size }) })
        .collect()
}
