use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tensorse::cpd::{align_factors, als_fit, masked_als_fit, rank_sweep, CpdFactors, FitOptions, InitStrategy};
use tensorse::tensor::{MaskTensor, Matrix, Tensor3};

type Dims = (usize, usize, usize);

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_factors(d: Dims, rank: usize, rng: &mut ChaCha8Rng) -> CpdFactors<f64> {
    CpdFactors::new(gaussian(d.0, rank, rng), gaussian(d.1, rank, rng), gaussian(d.2, rank, rng)).unwrap()
}

fn noisy(x: &Tensor3<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor3<f64> {
    let (ni, nj, nk) = x.dims();
    Tensor3::from_fn((ni, nj, nk), |i, j, k| x.get(i, j, k) + sigma * rng.sample::<f64, _>(StandardNormal)).unwrap()
}

fn assert_non_increasing(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1e-300), "trace rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn masked_trace_is_non_increasing_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for trial in 0..100 {
        let d = (rng.random_range(2..=8), rng.random_range(2..=8), rng.random_range(2..=8));
        let rank = rng.random_range(1..=4);
        let x = random_factors(d, rank, &mut rng).reconstruct();
        let x = noisy(&x, 0.01, &mut rng);
        let density = rng.random_range(0.3..1.0);
        let mut mask = MaskTensor::from_fn(d, |_, _, _| rng.random_bool(density)).unwrap();
        mask.set(0, 0, 0, true);
        let opts = FitOptions {
            max_sweeps: 60,
            restarts: 2,
            seed: trial,
            init: if trial % 2 == 0 { InitStrategy::Random } else { InitStrategy::CompleteBlock },
            ridge: if trial % 3 == 0 { 1e-6 } else { 0.0 },
            ..FitOptions::default()
        };
        let fit = masked_als_fit(&x, &mask, rng.random_range(1..=4), &opts).unwrap();
        assert_non_increasing(&fit.objective_trace);
        let best = fit.objective();
        assert!(fit.restart_objectives.iter().all(|&r| best <= r), "trial {trial}");
    }
}

#[test]
fn dense_trace_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..20 {
        let x = random_factors((6, 5, 7), 3, &mut rng).reconstruct();
        let x = noisy(&x, 0.05, &mut rng);
        let fit = als_fit(&x, 2, &FitOptions { seed, max_sweeps: 100, ..FitOptions::default() }).unwrap();
        assert_non_increasing(&fit.objective_trace);
    }
}

#[test]
fn unobserved_values_do_not_affect_the_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for seed in 0..10 {
        let d = (7, 5, 8);
        let x = random_factors(d, 3, &mut rng).reconstruct();
        let mask = MaskTensor::from_fn(d, |_, _, _| rng.random_bool(0.6)).unwrap();
        let mut y = x.clone();
        for i in 0..d.0 {
            for j in 0..d.1 {
                for k in 0..d.2 {
                    if !mask.get(i, j, k) {
                        y.set(i, j, k, rng.random_range(-1e6..1e6));
                    }
                }
            }
        }
        let opts = FitOptions { seed, max_sweeps: 80, ridge: 1e-9, ..FitOptions::default() };
        let (fx, fy) = (masked_als_fit(&x, &mask, 3, &opts).unwrap(), masked_als_fit(&y, &mask, 3, &opts).unwrap());
        let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        for (a, b) in [(fx.factors.a(), fy.factors.a()), (fx.factors.b(), fy.factors.b()), (fx.factors.c(), fy.factors.c())] {
            assert_eq!(bits(a), bits(b));
        }
        let trace_bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(trace_bits(&fx.objective_trace), trace_bits(&fy.objective_trace));
        assert_eq!(fx.sweeps_used, fy.sweeps_used);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstruct_is_invariant_under_permutation_and_scaling(
        d in (1usize..=8, 1usize..=8, 1usize..=8),
        rank in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_factors(d, rank, &mut rng);
        let mut perm: Vec<usize> = (0..rank).collect();
        for i in (1..rank).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let s1: Vec<f64> = (0..rank).map(|_| rng.random_range(0.2..5.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 }).collect();
        let s2: Vec<f64> = (0..rank).map(|_| rng.random_range(0.2..5.0)).collect();
        let s3: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 1.0 / (a * b)).collect();
        let g = f.permute_and_scale(&perm, &[s1, s2, s3]).unwrap();
        let (x, y) = (f.reconstruct(), g.reconstruct());
        let scale = x.frobenius_sq().sqrt().max(1e-300);
        let diff: f64 = x.storage().iter().zip(y.storage()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-12 * scale, "diff {diff} vs norm {scale}");

        // Alignment recovers the transformation when the columns are
        // distinguishable in the largest mode.
        if d.0.max(d.1).max(d.2) < rank.max(2) {
            return Ok(());
        }
        let al = align_factors(&g, &f).unwrap();
        prop_assert!(al.match_error <= 1e-9);
        let mapped = al.apply(&f).unwrap();
        prop_assert!(mapped.a().max_abs_diff(g.a()) <= 1e-9 * (1.0 + g.a().frobenius_sq().sqrt()));
    }
}

#[test]
fn normalization_keeps_the_tensor_and_fixes_signs() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let f = random_factors((5, 4, 6), 3, &mut rng);
    let mut g = f.clone();
    g.normalize();
    assert!(f.reconstruct().relative_error(&g.reconstruct()).unwrap() < 1e-26);
    for c in 0..3 {
        let a: Vec<f64> = g.a().column(c);
        let b: Vec<f64> = g.b().column(c);
        assert!((a.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((b.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().find(|v| **v != 0.0).unwrap() > &0.0);
    }
}

#[test]
fn full_observation_recovers_random_factors() {
    // Generic uniqueness holds comfortably for these dims at rank 3.
    let d = (8, 6, 7);
    let mut ok = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let truth = random_factors(d, 3, &mut rng);
        let x = truth.reconstruct();
        let opts = FitOptions { seed: trial, restarts: 5, max_sweeps: 2000, rel_tol: 1e-14, ..FitOptions::default() };
        let fit = als_fit(&x, 3, &opts).unwrap();
        if align_factors(&fit.factors, &truth).unwrap().match_error <= 1e-6 {
            ok += 1;
        }
    }
    assert!(ok >= 95, "{ok}/100 recovered");
}

#[test]
fn masked_full_mask_agrees_with_dense_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = random_factors((6, 5, 7), 2, &mut rng).reconstruct();
    let opts = FitOptions { seed: 4, rel_tol: 1e-14, max_sweeps: 2000, ..FitOptions::default() };
    let dense = als_fit(&x, 2, &opts).unwrap();
    let masked = masked_als_fit(&x, &MaskTensor::full(x.dims()).unwrap(), 2, &opts).unwrap();
    assert!(x.relative_error(&dense.reconstruct()).unwrap() < 1e-16);
    assert!(x.relative_error(&masked.reconstruct()).unwrap() < 1e-16);
}

#[test]
fn rank_sweep_on_exact_rank_five() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = random_factors((8, 7, 9), 5, &mut rng).reconstruct();
    let opts = FitOptions { restarts: 3, max_sweeps: 3000, rel_tol: 1e-13, ..FitOptions::default() };
    let pts = rank_sweep(&x, 5, &opts).unwrap();
    let errs: Vec<f64> = pts.iter().map(|p| *p.relative_error.as_ref().unwrap()).collect();
    assert!(errs[4] <= 1e-8, "{errs:?}");
    assert!(errs[..4].iter().all(|&e| e > 0.0), "{errs:?}");
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{errs:?}");

    let one = Tensor3::rank_one(&[1.0, 2.0], &[3.0, -1.0, 0.5], &[0.2, 0.4]).unwrap();
    let pts = rank_sweep(&one, 1, &FitOptions::default()).unwrap();
    assert!(*pts[0].relative_error.as_ref().unwrap() < 1e-20);
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let d = (6, 5, 6);
    let x = random_factors(d, 2, &mut rng).reconstruct();
    let mask = MaskTensor::from_fn(d, |_, _, _| rng.random_bool(0.7)).unwrap();
    let opts = FitOptions { seed: 77, ..FitOptions::default() };
    assert_eq!(masked_als_fit(&x, &mask, 2, &opts).unwrap(), masked_als_fit(&x, &mask, 2, &opts).unwrap());
}

#[test]
fn invalid_options_and_inputs_are_rejected() {
    let x = Tensor3::rank_one(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 3.0]).unwrap();
    let full = MaskTensor::full(x.dims()).unwrap();
    assert!(masked_als_fit(&x, &full, 0, &FitOptions::default()).is_err());
    assert!(masked_als_fit(&x, &MaskTensor::empty(x.dims()).unwrap(), 1, &FitOptions::default()).is_err());
    for bad in [
        FitOptions { rel_tol: 0.0, ..FitOptions::default() },
        FitOptions { max_sweeps: 0, ..FitOptions::default() },
        FitOptions { restarts: 0, ..FitOptions::default() },
        FitOptions { ridge: -1.0, ..FitOptions::default() },
    ] {
        assert!(masked_als_fit(&x, &full, 1, &bad).is_err());
    }
    let mut nan = x.clone();
    nan.set(0, 0, 0, f64::NAN);
    assert!(masked_als_fit(&nan, &full, 1, &FitOptions::default()).is_err());
}
