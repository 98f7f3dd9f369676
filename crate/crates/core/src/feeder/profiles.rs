//! Seeded load and solar time series.
//!
//! Every loaded phase follows a shared daily load curve, shifted in time by
//! up to ±45 minutes and scaled by a factor in `[0.85, 1.15]` drawn per
//! phase, times `1 + n(t)` with a per-phase noise term `n`. Solar output is
//! a clear-sky curve between 06:00 and 18:00 times its own `1 + n(t)`.
//!
//! * Consecutive mode: 1-minute steps from 11:00. The noise is a bounded
//!   mean-reverting walk `n ← ρ·n + δ·u`, `u ~ U(−1, 1)`, with `ρ = 0.9`,
//!   `δ = 0.004`, so `|n| ≤ 0.04` and the load multiplier moves by at most
//!   [`CONSECUTIVE_MAX_STEP`] per step.
//! * Nonconsecutive mode: 20-minute steps from 00:00, noise drawn
//!   independently at every step with five times the stationary standard
//!   deviation of the consecutive walk, clipped to ±0.3.
//!
//! Load multipliers are clipped to `[0.2, 1.5]` of the peak rating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::feeder::{FeederError, FeederModel};

const RHO: f64 = 0.9;
const DELTA: f64 = 0.004;
pub const MIN_LOAD_MULTIPLIER: f64 = 0.2;
pub const MAX_LOAD_MULTIPLIER: f64 = 1.5;
/// Bound on the per-step change of a consecutive-mode load multiplier.
pub const CONSECUTIVE_MAX_STEP: f64 = 0.02;
pub const DEFAULT_STEPS: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMode {
    Consecutive,
    Nonconsecutive,
}

impl ProfileMode {
    pub fn spacing_minutes(self) -> u32 {
        match self {
            Self::Consecutive => 1,
            Self::Nonconsecutive => 20,
        }
    }

    pub fn start_minute(self) -> u32 {
        match self {
            Self::Consecutive => 11 * 60,
            Self::Nonconsecutive => 0,
        }
    }

    fn noise_std(self) -> f64 {
        let stationary = DELTA / 3f64.sqrt() / (1.0 - RHO * RHO).sqrt();
        match self {
            Self::Consecutive => stationary,
            Self::Nonconsecutive => 5.0 * stationary,
        }
    }
}

impl std::str::FromStr for ProfileMode {
    type Err = FeederError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consecutive" => Ok(Self::Consecutive),
            "nonconsecutive" => Ok(Self::Nonconsecutive),
            _ => Err(FeederError::Profile(format!("unknown profile mode `{s}`"))),
        }
    }
}

/// Per-phase demand and solar series in kW/kVAr, indexed `[phase][step]` in
/// tensor phase order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub mode: ProfileMode,
    pub seed: u64,
    /// Minutes since the first midnight.
    pub timestamps: Vec<u32>,
    pub p_load: Vec<Vec<f64>>,
    pub q_load: Vec<Vec<f64>>,
    pub solar: Vec<Vec<f64>>,
}

/// Fraction of peak load at hour `h` (wrapped to a day).
pub fn daily_load_shape(h: f64) -> f64 {
    let h = h.rem_euclid(24.0);
    let bump = |mu: f64, sigma: f64| {
        // Distance on the 24-hour circle.
        let d = (h - mu).abs().min(24.0 - (h - mu).abs());
        (-0.5 * (d / sigma).powi(2)).exp()
    };
    0.45 + 0.2 * bump(8.0, 1.5) + 0.1 * bump(13.0, 3.0) + 0.45 * bump(19.0, 2.5)
}

/// Clear-sky fraction of solar rating at hour `h`.
pub fn solar_shape(h: f64) -> f64 {
    let h = h.rem_euclid(24.0);
    if (6.0..=18.0).contains(&h) {
        (std::f64::consts::PI * (h - 6.0) / 12.0).sin().powf(1.2)
    } else {
        0.0
    }
}

impl ProfileSet {
    pub fn generate(feeder: &FeederModel, mode: ProfileMode, steps: usize, seed: u64) -> Result<Self, FeederError> {
        if steps == 0 {
            return Err(FeederError::Profile("profiles need at least one step".into()));
        }
        let spacing = mode.spacing_minutes();
        let timestamps: Vec<u32> = (0..steps as u32).map(|k| mode.start_minute() + k * spacing).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = feeder.phases();
        let zeros = vec![0.0; steps];
        let (mut p_load, mut q_load, mut solar) = (Vec::new(), Vec::new(), Vec::new());
        for &ph in &phases {
            // Draw for every phase so one phase's series never depends on
            // which other phases happen to be loaded.
            let shift_h = rng.random_range(-0.75..=0.75);
            let scale = rng.random_range(0.85..=1.15);
            let load_noise = noise_series(&mut rng, mode, steps);
            let solar_noise = noise_series(&mut rng, mode, steps);
            let Some(spec) = feeder.load_at(ph).filter(|_| !feeder.is_zero_injection(ph)) else {
                p_load.push(zeros.clone());
                q_load.push(zeros.clone());
                solar.push(zeros.clone());
                continue;
            };
            let mult: Vec<f64> = timestamps
                .iter()
                .zip(&load_noise)
                .map(|(&t, n)| {
                    let h = t as f64 / 60.0 + shift_h;
                    (daily_load_shape(h) * scale * (1.0 + n)).clamp(MIN_LOAD_MULTIPLIER, MAX_LOAD_MULTIPLIER)
                })
                .collect();
            p_load.push(mult.iter().map(|m| m * spec.p_kw).collect());
            q_load.push(mult.iter().map(|m| m * spec.q_kvar).collect());
            solar.push(
                timestamps
                    .iter()
                    .zip(&solar_noise)
                    .map(|(&t, n)| spec.solar_kw * solar_shape(t as f64 / 60.0) * (1.0 + n))
                    .collect(),
            );
        }
        Ok(Self { mode, seed, timestamps, p_load, q_load, solar })
    }

    pub fn steps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn spacing_minutes(&self) -> u32 {
        self.mode.spacing_minutes()
    }
}

fn noise_series(rng: &mut ChaCha8Rng, mode: ProfileMode, steps: usize) -> Vec<f64> {
    match mode {
        ProfileMode::Consecutive => {
            let bound = DELTA / (1.0 - RHO);
            let mut n: f64 = rng.random_range(-bound..=bound);
            (0..steps)
                .map(|_| {
                    let out = n;
                    n = RHO * n + DELTA * rng.random_range(-1.0..=1.0);
                    out
                })
                .collect()
        }
        ProfileMode::Nonconsecutive => {
            let normal = Normal::new(0.0, mode.noise_std()).expect("positive std");
            (0..steps).map(|_| normal.sample(rng).clamp(-0.3, 0.3)).collect()
        }
    }
}
