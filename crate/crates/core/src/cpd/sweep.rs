use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cpd::{als_fit, als_fit_from, CpdFactors, FitError, FitOptions};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor3};

/// Slack for solver noise when judging whether the curve went up.
const MONOTONE_SLACK: f64 = 1e-10;

/// One point of a rank sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPoint<T> {
    pub rank: usize,
    /// `‖X − X̂_k‖²_F / ‖X‖²_F` for the best rank-`k` fit found.
    pub relative_error: Result<T, FitError>,
    /// How the point was obtained: `fit`, `refit` (more restarts), or `warm`
    /// (continued from the previous rank's factors plus one new column).
    pub source: &'static str,
}

/// Relative error of the best rank-`k` fit for `k = 1..=k_max`.
///
/// When a point comes out above its predecessor it is refit with twice the
/// restarts and, failing that, continued from the previous rank's factors
/// with an extra inert column, which cannot end above the previous point.
pub fn rank_sweep<T: Scalar>(x: &Tensor3<T>, k_max: usize, opts: &FitOptions) -> Result<Vec<RankPoint<T>>, FitError> {
    if k_max == 0 {
        return Err(FitError::InvalidOptions("k_max must be >= 1".into()));
    }
    opts.validate()?;
    let mut points = Vec::with_capacity(k_max);
    let mut prev: Option<(T, CpdFactors<T>)> = None;
    for rank in 1..=k_max {
        let rank_opts = FitOptions { seed: opts.seed.wrapping_add(rank as u64), ..opts.clone() };
        let mut source = "fit";
        let mut outcome = fit_error(x, als_fit(x, rank, &rank_opts));
        if let (Ok((err, _)), Some((prev_err, _))) = (&outcome, &prev) {
            if *err > *prev_err + T::of(MONOTONE_SLACK) {
                let more = FitOptions { restarts: opts.restarts * 2, ..rank_opts.clone() };
                let refit = fit_error(x, als_fit(x, rank, &more));
                if matches!(&refit, Ok((e, _)) if *e < *err) {
                    outcome = refit;
                    source = "refit";
                }
            }
        }
        if let (Ok((err, _)), Some((prev_err, prev_factors))) = (&outcome, &prev) {
            if *err > *prev_err + T::of(MONOTONE_SLACK) {
                let init = extend_with_inert_column(prev_factors, opts.seed.wrapping_add(rank as u64));
                let warm = fit_error(x, als_fit_from(x, init, &rank_opts));
                if matches!(&warm, Ok((e, _)) if *e < *err) {
                    outcome = warm;
                    source = "warm";
                }
            }
        }
        match outcome {
            Ok((err, factors)) => {
                points.push(RankPoint { rank, relative_error: Ok(err), source });
                prev = Some((err, factors));
            }
            Err(e) => points.push(RankPoint { rank, relative_error: Err(e), source }),
        }
    }
    Ok(points)
}

fn fit_error<T: Scalar>(
    x: &Tensor3<T>,
    fit: Result<crate::cpd::FitResult<T>, FitError>,
) -> Result<(T, CpdFactors<T>), FitError> {
    let fit = fit?;
    let err = x.relative_error(&fit.reconstruct())?;
    Ok((err, fit.factors))
}

/// Appends a column with random `A`, `B` parts and a zero `C` part, leaving the
/// reconstruction unchanged.
fn extend_with_inert_column<T: Scalar>(f: &CpdFactors<T>, seed: u64) -> CpdFactors<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = f.rank();
    let mut grow = |m: &Matrix<T>, fill: bool| {
        Matrix::from_fn(m.rows(), rank + 1, |r, c| {
            if c < rank {
                m[(r, c)]
            } else if fill {
                let g: f64 = StandardNormal.sample(&mut rng);
                T::of(g / (m.rows() as f64).sqrt())
            } else {
                T::zero()
            }
        })
    };
    let a = grow(f.a(), true);
    let b = grow(f.b(), true);
    let c = grow(f.c(), false);
    CpdFactors::new(a, b, c).expect("shapes preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rank_one_point() {
        let x = Tensor3::rank_one(&[1.0, 2.0, -1.0], &[0.5, 1.5], &[1.0, 3.0, 2.0, -1.0]).unwrap();
        let pts = rank_sweep(&x, 1, &FitOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(*pts[0].relative_error.as_ref().unwrap() < 1e-12);
    }

    #[test]
    fn inert_column_preserves_reconstruction() {
        let x = Tensor3::rank_one(&[1.0, 2.0], &[0.5, 1.5], &[1.0, 3.0]).unwrap();
        let fit = als_fit(&x, 1, &FitOptions::default()).unwrap();
        let grown = extend_with_inert_column(&fit.factors, 3);
        assert_eq!(grown.rank(), 2);
        assert_eq!(grown.reconstruct(), fit.factors.reconstruct());
    }

    #[test]
    fn zero_k_max_rejected() {
        let x = Tensor3::rank_one(&[1.0], &[1.0], &[1.0]).unwrap();
        assert!(rank_sweep(&x, 0, &FitOptions::default()).is_err());
    }
}
