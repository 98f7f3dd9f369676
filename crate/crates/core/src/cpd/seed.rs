//! Complete sub-blocks of a mask used to seed masked ALS.
//!
//! A slab or fiber mask contains fully observed subtensors: the sampled
//! horizontal slabs, the sampled frontal slabs, or the `rows × cols × K`
//! rectangles of a fiber pattern. When such a block is generically
//! identifiable at the target rank, a plain ALS fit of the block recovers
//! its factors, and the remaining factor rows follow from least squares on
//! the other observations. Starting the masked iteration there avoids most of
//! the spurious stationary points that random starts run into.

use std::collections::{BTreeSet, HashSet};

use crate::sampling::generic_identifiability;
use crate::scalar::Scalar;
use crate::tensor::{MaskTensor, Matrix, Tensor3};

/// A fully observed subtensor and its index sets along each mode.
#[derive(Debug, Clone)]
pub(crate) struct SeedBlock<T> {
    pub index: [Vec<usize>; 3],
    pub sub: Tensor3<T>,
}

impl<T: Scalar> SeedBlock<T> {
    /// Places block factors into full-size factors; rows outside the block are zero.
    pub fn embed(&self, dims: (usize, usize, usize), parts: &[Matrix<T>; 3]) -> [Matrix<T>; 3] {
        let sizes = [dims.0, dims.1, dims.2];
        std::array::from_fn(|m| {
            let rank = parts[m].cols();
            let mut out = Matrix::zeros(sizes[m], rank);
            for (local, &global) in self.index[m].iter().enumerate() {
                out.row_mut(global).copy_from_slice(parts[m].row(local));
            }
            out
        })
    }
}

/// Fully observed blocks of `mask` that pass the generic uniqueness bound at
/// `rank`, largest first. The whole tensor is never returned.
pub(crate) fn complete_blocks<T: Scalar>(x: &Tensor3<T>, mask: &MaskTensor, rank: usize) -> Vec<SeedBlock<T>> {
    let (ni, nj, nk) = mask.dims();
    let full_k: Vec<usize> = (0..nk).collect();

    // fibers[i] = measurements j whose whole time fiber (i, j, :) is observed.
    let fibers: Vec<BTreeSet<usize>> = (0..ni)
        .map(|i| (0..nj).filter(|&j| (0..nk).all(|k| mask.get(i, j, k))).collect())
        .collect();

    let mut candidates: Vec<[Vec<usize>; 3]> = Vec::new();
    let horizontal: Vec<usize> = (0..ni).filter(|&i| fibers[i].len() == nj).collect();
    candidates.push([horizontal, (0..nj).collect(), full_k.clone()]);
    let frontal: Vec<usize> = (0..nk).filter(|&k| (0..nj).all(|j| (0..ni).all(|i| mask.get(i, j, k)))).collect();
    candidates.push([(0..ni).collect(), (0..nj).collect(), frontal]);
    let vertical: Vec<usize> = (0..nj).filter(|&j| (0..ni).all(|i| fibers[i].contains(&j))).collect();
    candidates.push([(0..ni).collect(), vertical, full_k.clone()]);
    let distinct: BTreeSet<&BTreeSet<usize>> = fibers.iter().filter(|s| !s.is_empty()).collect();
    for cols in distinct {
        let rows: Vec<usize> = (0..ni).filter(|&i| cols.is_subset(&fibers[i])).collect();
        candidates.push([rows, cols.iter().copied().collect(), full_k.clone()]);
    }

    let mut seen = HashSet::new();
    let mut blocks: Vec<SeedBlock<T>> = candidates
        .into_iter()
        .filter(|idx| idx.iter().all(|v| !v.is_empty()))
        .filter(|idx| (idx[0].len(), idx[1].len(), idx[2].len()) != (ni, nj, nk))
        .filter(|idx| generic_identifiability(idx[0].len(), idx[1].len(), idx[2].len(), rank).satisfied)
        .filter(|idx| seen.insert(idx.clone()))
        .map(|index| {
            let sub = Tensor3::from_fn((index[0].len(), index[1].len(), index[2].len()), |a, b, c| {
                x.get(index[0][a], index[1][b], index[2][c])
            })
            .expect("nonempty block");
            SeedBlock { index, sub }
        })
        .collect();
    blocks.sort_by_key(|b| std::cmp::Reverse(b.sub.len()));
    blocks
}
