//! Matching estimated factors to reference factors up to the permutation and
//! per-mode scaling ambiguity of the CPD.

use crate::cpd::{column_norm, CpdFactors, FitError};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Greedy choices closer than this fall back to an optimal assignment.
const COSINE_GAP: f64 = 1e-6;

/// Result of [`align_factors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T> {
    /// `permutation[f]` is the reference column matched to estimated column `f`,
    /// so `est[:, f] ≈ scalings[m][f] · truth[:, permutation[f]]` in every mode.
    pub permutation: Vec<usize>,
    /// Per-mode column scalings; their product over modes is one per column.
    pub scalings: [Vec<T>; 3],
    /// Largest relative column residual `‖est − λ·truth‖ / ‖est‖` over all
    /// modes and columns after alignment.
    pub match_error: T,
    /// Whether the optimal-assignment fallback was used.
    pub used_assignment: bool,
}

impl<T: Scalar> Alignment<T> {
    /// Maps reference factors onto the estimate's column order and scaling.
    pub fn apply(&self, truth: &CpdFactors<T>) -> Result<CpdFactors<T>, FitError> {
        truth.permute_and_scale(&self.permutation, &self.scalings)
    }
}

/// Aligns `est` to `truth`.
///
/// Columns are matched greedily by absolute cosine on the mode with the
/// largest dimension; when two candidates are within `1e-6` of each other the
/// matching is recomputed as an optimal assignment over all three modes.
/// Scalings for the first two modes are least-squares projections; the third
/// is fixed by requiring the product of scalings to be one.
pub fn align_factors<T: Scalar>(est: &CpdFactors<T>, truth: &CpdFactors<T>) -> Result<Alignment<T>, FitError> {
    if est.rank() != truth.rank() {
        return Err(FitError::Shape(format!("rank {} vs {}", est.rank(), truth.rank())));
    }
    if est.dims() != truth.dims() {
        return Err(FitError::Shape(format!("dims {:?} vs {:?}", est.dims(), truth.dims())));
    }
    let rank = est.rank();
    let parts_est = [est.a(), est.b(), est.c()];
    let parts_truth = [truth.a(), truth.b(), truth.c()];
    let cosines: Vec<Vec<Vec<f64>>> =
        (0..3).map(|m| abs_cosines(parts_est[m], parts_truth[m])).collect();

    let (ni, nj, nk) = est.dims();
    let lead = if ni >= nj && ni >= nk { 0 } else if nj >= nk { 1 } else { 2 };

    let (permutation, used_assignment) = match greedy(&cosines[lead]) {
        Some(p) => (p, false),
        None => {
            let cost: Vec<Vec<f64>> = (0..rank)
                .map(|e| (0..rank).map(|t| cosines.iter().map(|c| 1.0 - c[e][t]).sum()).collect())
                .collect();
            (hungarian(&cost), true)
        }
    };

    let mut scalings: [Vec<T>; 3] = Default::default();
    for m in 0..2 {
        scalings[m] = (0..rank).map(|f| projection(parts_est[m], f, parts_truth[m], permutation[f])).collect();
    }
    scalings[2] = (0..rank).map(|f| T::one() / (scalings[0][f] * scalings[1][f])).collect();

    let mut match_error = T::zero();
    for m in 0..3 {
        for f in 0..rank {
            let (e, t) = (parts_est[m], parts_truth[m]);
            let lambda = scalings[m][f];
            let resid: T = (0..e.rows())
                .map(|r| {
                    let d = e[(r, f)] - lambda * t[(r, permutation[f])];
                    d * d
                })
                .sum::<T>()
                .sqrt();
            let norm = column_norm(e, f);
            let rel = if norm > T::zero() { resid / norm } else { T::infinity() };
            let rel = if rel.is_nan() { T::infinity() } else { rel };
            match_error = match_error.max(rel);
        }
    }

    Ok(Alignment { permutation, scalings, match_error, used_assignment })
}

fn abs_cosines<T: Scalar>(est: &Matrix<T>, truth: &Matrix<T>) -> Vec<Vec<f64>> {
    let rank = est.cols();
    (0..rank)
        .map(|e| {
            let ne = column_norm(est, e).as_f64();
            (0..rank)
                .map(|t| {
                    let nt = column_norm(truth, t).as_f64();
                    let dot: f64 = (0..est.rows()).map(|r| (est[(r, e)] * truth[(r, t)]).as_f64()).sum();
                    if ne > 0.0 && nt > 0.0 {
                        (dot / (ne * nt)).abs().min(1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Repeatedly takes the largest remaining cosine. Returns `None` when any pick
/// is ambiguous.
fn greedy(cos: &[Vec<f64>]) -> Option<Vec<usize>> {
    let n = cos.len();
    let mut perm = vec![usize::MAX; n];
    let mut used_e = vec![false; n];
    let mut used_t = vec![false; n];
    for _ in 0..n {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for e in (0..n).filter(|&e| !used_e[e]) {
            for t in (0..n).filter(|&t| !used_t[t]) {
                cands.push((cos[e][t], e, t));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (best, e, t) = cands[0];
        // A competitor sharing a row or column with the pick makes it ambiguous.
        let rival = cands[1..].iter().find(|c| c.1 == e || c.2 == t).map(|c| c.0);
        if rival.is_some_and(|r| best - r < COSINE_GAP) {
            return None;
        }
        perm[e] = t;
        used_e[e] = true;
        used_t[t] = true;
    }
    Some(perm)
}

/// Minimum-cost perfect assignment (Kuhn–Munkres with potentials).
/// Returns `assign[row] = col`.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn projection<T: Scalar>(est: &Matrix<T>, e: usize, truth: &Matrix<T>, t: usize) -> T {
    let dot: T = (0..est.rows()).map(|r| est[(r, e)] * truth[(r, t)]).sum();
    let nt: T = (0..truth.rows()).map(|r| truth[(r, t)] * truth[(r, t)]).sum();
    dot / nt
}
