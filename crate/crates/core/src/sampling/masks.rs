use std::collections::BTreeSet;

use crate::sampling::{FiberScheme, SamplingError, SlabScheme};
use crate::tensor::{Dims, MaskTensor, TensorError};

/// `M_s(i,j,k) = 1` iff `i` is a sampled phase or `k` a sampled time step.
pub fn build_slab_mask(s: &SlabScheme) -> Result<MaskTensor, SamplingError> {
    Ok(MaskTensor::from_fn(s.dims(), |i, _, k| s.horizontal().contains(&i) || s.frontal().contains(&k))?)
}

/// `M_f(i,j,k) = 1` iff `(i, j)` lies in either pattern rectangle.
pub fn build_fiber_mask(s: &FiberScheme) -> Result<MaskTensor, SamplingError> {
    let (ni, nj, _) = s.dims();
    let mut hit = vec![false; ni * nj];
    for p in s.patterns() {
        for &i in &p.rows {
            for &j in &p.cols {
                hit[i + ni * j] = true;
            }
        }
    }
    Ok(MaskTensor::from_fn(s.dims(), |i, j, _| hit[i + ni * j])?)
}

/// Observes the vertical slabs `X(:, j, :)` for `j` in `measurements`.
pub fn build_vertical_mask(dims: Dims, measurements: &BTreeSet<usize>) -> Result<MaskTensor, SamplingError> {
    if let Some(&bad) = measurements.iter().find(|&&j| j >= dims.1) {
        return Err(SamplingError::IndexOutOfRange { axis: "measurement", index: bad, size: dims.1 });
    }
    Ok(MaskTensor::from_fn(dims, |_, j, _| measurements.contains(&j))?)
}

/// Percentage of entries observed in `mask` or in `extra_known`.
pub fn sampling_fraction(mask: &MaskTensor, extra_known: Option<&MaskTensor>) -> Result<f64, SamplingError> {
    let count = match extra_known {
        Some(extra) => mask.union(extra)?.count_observed(),
        None => mask.count_observed(),
    };
    if mask.is_empty() {
        return Err(TensorError::EmptyDims(0, 0, 0).into());
    }
    Ok(100.0 * count as f64 / mask.len() as f64)
}

/// `count` zero-based indices spread evenly over `0..len`, ending at the last
/// index: `round(m·len/count) − 1` for `m = 1..=count`. With `len = 72` and
/// `count = 3` this gives `23, 47, 71`.
pub fn equally_spaced(len: usize, count: usize) -> Vec<usize> {
    let count = count.min(len);
    (1..=count)
        .map(|m| {
            let pos = (m as f64 * len as f64 / count as f64).round() as usize;
            pos.clamp(1, len) - 1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_phases_gives_full_mask() {
        let s = SlabScheme::new((3, 2, 4), 0..3, []).unwrap();
        assert_eq!(build_slab_mask(&s).unwrap(), MaskTensor::full((3, 2, 4)).unwrap());
    }

    #[test]
    fn empty_sets_give_empty_mask() {
        let s = SlabScheme::new((3, 2, 4), [], []).unwrap();
        assert_eq!(build_slab_mask(&s).unwrap().count_observed(), 0);
    }

    #[test]
    fn slab_count_by_inclusion_exclusion() {
        let (ni, nj, nk) = (263, 5, 72);
        let s = SlabScheme::new((ni, nj, nk), 0..16, equally_spaced(nk, 3)).unwrap();
        let m = build_slab_mask(&s).unwrap();
        assert_eq!(m.count_observed(), 16 * 5 * 72 + 263 * 5 * 3 - 16 * 5 * 3);
        assert_eq!(m.count_observed(), 9465);
        let pct = sampling_fraction(&m, None).unwrap();
        assert!((pct - 100.0 * 9465.0 / 94680.0).abs() < 1e-12);
        assert!((pct - 9.997).abs() < 1e-3);
    }

    #[test]
    fn fiber_pattern_covering_everything() {
        let s = FiberScheme::new((3, 2, 2), [((0..3).collect(), vec![0, 1]), (vec![], vec![])]).unwrap();
        assert_eq!(build_fiber_mask(&s).unwrap(), MaskTensor::full((3, 2, 2)).unwrap());
    }

    #[test]
    fn fiber_count_for_two_overlapping_patterns() {
        // 250 voltage rows and 16 power rows sharing rows {0,1,2}.
        let rows1: Vec<usize> = (0..250).collect();
        let rows2: Vec<usize> = (0..3).chain(250..263).collect();
        let s = FiberScheme::new((263, 5, 72), [(rows1, vec![0, 1, 2]), (rows2, vec![3, 4])]).unwrap();
        let m = build_fiber_mask(&s).unwrap();
        assert_eq!(m.count_observed(), (250 * 3 + 16 * 2) * 72);
        assert_eq!(m.count_observed() / 72, 782);
    }

    #[test]
    fn disjoint_single_rows() {
        let s = FiberScheme::new((4, 5, 6), [(vec![0], vec![0, 1]), (vec![3], vec![2, 3, 4])]).unwrap();
        assert_eq!(build_fiber_mask(&s).unwrap().count_observed(), (2 + 3) * 6);
    }

    #[test]
    fn vertical_mask() {
        let m = build_vertical_mask((2, 3, 2), &[1].into()).unwrap();
        assert_eq!(m.count_observed(), 4);
        assert!(build_vertical_mask((2, 3, 2), &[3].into()).is_err());
    }

    #[test]
    fn equally_spaced_times() {
        assert_eq!(equally_spaced(72, 3), vec![23, 47, 71]);
        assert_eq!(equally_spaced(72, 6), vec![11, 23, 35, 47, 59, 71]);
        assert_eq!(equally_spaced(5, 5), vec![0, 1, 2, 3, 4]);
        assert_eq!(equally_spaced(5, 0), Vec::<usize>::new());
    }

    #[test]
    fn fraction_counts_union_with_extras() {
        let m = MaskTensor::from_fn((2, 2, 1), |i, _, _| i == 0).unwrap();
        let extra = MaskTensor::from_fn((2, 2, 1), |_, j, _| j == 0).unwrap();
        assert_eq!(sampling_fraction(&m, Some(&extra)).unwrap(), 75.0);
        assert_eq!(sampling_fraction(&MaskTensor::full((2, 2, 1)).unwrap(), None).unwrap(), 100.0);
    }
}
