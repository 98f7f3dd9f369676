//! Synthetic state tensors from a radial feeder simulation, CSV ingestion
//! of recorded series, and measurement noise.
//!
//! The measurement axis is fixed: index 0 `Re v`, 1 `Im v`, 2 `|v|` (per
//! unit), 3 `p` (kW), 4 `q` (kVAr). Powers are injections into the network:
//! loads appear negative, solar positive, and the slack phases carry the
//! power they supply.

mod generate;
mod ingest;
mod model;
mod powerflow;
mod profiles;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{MaskTensor, Tensor3, TensorError};

pub use generate::{default_feeder, generate_feeder, tiny_feeder, GeneratorParams};
pub use ingest::{build_state_tensor, write_state_csv};
pub use model::{parse_feeder, write_feeder, Bus, FeederModel, LoadSpec, Line, PhaseRef, PHASE_NAMES};
pub use powerflow::{slack_voltage, Network, PowerFlowSolution, MAX_ITERATIONS, MISMATCH_TOL};
pub use profiles::{
    daily_load_shape, solar_shape, ProfileMode, ProfileSet, CONSECUTIVE_MAX_STEP, DEFAULT_STEPS, MAX_LOAD_MULTIPLIER,
    MIN_LOAD_MULTIPLIER,
};

pub const RE_V: usize = 0;
pub const IM_V: usize = 1;
pub const VMAG: usize = 2;
pub const P: usize = 3;
pub const Q: usize = 4;
pub const MEASUREMENTS: [&str; 5] = ["re_v", "im_v", "vmag", "p", "q"];
pub const UNITS: [&str; 5] = ["pu", "pu", "pu", "kW", "kVAr"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeederError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid feeder: {0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("power flow did not converge{} (mismatch {mismatch:.3e})", step_suffix(*step))]
    NonConvergent { step: Option<usize>, mismatch: f64 },
    #[error("voltage collapse at phase {phase}{}: loading is infeasible", step_suffix(*step))]
    Infeasible { step: Option<usize>, phase: usize },
    #[error("profiles: {0}")]
    Profile(String),
    #[error("column `{column}` is declared in {found}, expected {expected}")]
    UnitMismatch { column: String, expected: String, found: String },
    #[error("line {line}: duplicate record for phase `{phase}` at minute {timestamp}")]
    Duplicate { line: usize, phase: String, timestamp: u32 },
    #[error("metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn step_suffix(step: Option<usize>) -> String {
    step.map(|k| format!(" at step {k}")).unwrap_or_default()
}

/// Axis labels and semantics of a state tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTensorMeta {
    pub phase_labels: Vec<String>,
    pub measurements: Vec<String>,
    pub units: Vec<String>,
    /// Minutes since the first midnight, one per time step.
    pub timestamps: Vec<u32>,
    pub spacing_minutes: u32,
    /// Phases without load or generation; their `p` and `q` are known zeros.
    pub zero_injection: Vec<bool>,
    pub slack_phases: Vec<usize>,
}

impl StateTensorMeta {
    pub fn new(
        phase_labels: Vec<String>,
        timestamps: Vec<u32>,
        spacing_minutes: u32,
        zero_injection: Vec<bool>,
        slack_phases: Vec<usize>,
    ) -> Result<Self, FeederError> {
        let meta = Self {
            phase_labels,
            measurements: MEASUREMENTS.iter().map(|s| s.to_string()).collect(),
            units: UNITS.iter().map(|s| s.to_string()).collect(),
            timestamps,
            spacing_minutes,
            zero_injection,
            slack_phases,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), FeederError> {
        let bad = |m: &str| Err(FeederError::Meta(m.into()));
        if self.measurements != MEASUREMENTS || self.units != UNITS {
            return bad("measurement axis must be re_v, im_v, vmag, p, q in pu, pu, pu, kW, kVAr");
        }
        if self.phase_labels.is_empty() || self.timestamps.is_empty() {
            return bad("empty phase or time axis");
        }
        if self.zero_injection.len() != self.phase_labels.len() {
            return bad("zero_injection length differs from the phase count");
        }
        if self.slack_phases.iter().any(|&s| s >= self.phase_labels.len() || self.zero_injection[s]) {
            return bad("slack phases must be in range and carry power");
        }
        let mut labels: Vec<&String> = self.phase_labels.iter().collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.phase_labels.len() {
            return bad("duplicate phase labels");
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return bad("timestamps must increase");
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.phase_labels.len(), MEASUREMENTS.len(), self.timestamps.len())
    }

    /// Phases that are neither slack nor zero-injection.
    pub fn load_phases(&self) -> Vec<usize> {
        (0..self.phase_labels.len()).filter(|i| !self.zero_injection[*i] && !self.slack_phases.contains(i)).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("meta serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FeederError> {
        let meta: Self = serde_json::from_str(text).map_err(|e| FeederError::Meta(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }
}

/// Runs one power flow per time step and assembles the state tensor.
pub fn simulate(feeder: &FeederModel, profiles: &ProfileSet) -> Result<(Tensor3<f64>, StateTensorMeta), FeederError> {
    let phases = feeder.phases();
    let steps = profiles.steps();
    for (name, series) in [("p_load", &profiles.p_load), ("q_load", &profiles.q_load), ("solar", &profiles.solar)] {
        if series.len() != phases.len() || series.iter().any(|s| s.len() != steps) {
            return Err(FeederError::Profile(format!("{name} does not cover {} phases × {steps} steps", phases.len())));
        }
    }
    let network = Network::new(feeder);
    let base = feeder.base_kva();
    let mut x = Tensor3::zeros((phases.len(), MEASUREMENTS.len(), steps))?;
    for k in 0..steps {
        let demand: Vec<Complex64> = (0..phases.len())
            .map(|i| Complex64::new(profiles.p_load[i][k] - profiles.solar[i][k], profiles.q_load[i][k]) / base)
            .collect();
        let sol = network.solve(&demand).map_err(|e| match e {
            FeederError::NonConvergent { mismatch, .. } => FeederError::NonConvergent { step: Some(k), mismatch },
            FeederError::Infeasible { phase, .. } => FeederError::Infeasible { step: Some(k), phase },
            other => other,
        })?;
        for (i, (v, s)) in sol.voltages.iter().zip(&sol.injections).enumerate() {
            x.set(i, RE_V, k, v.re);
            x.set(i, IM_V, k, v.im);
            x.set(i, VMAG, k, v.re.hypot(v.im));
            x.set(i, P, k, s.re * base);
            x.set(i, Q, k, s.im * base);
        }
    }
    let meta = StateTensorMeta::new(
        phases.iter().map(|&p| feeder.phase_label(p)).collect(),
        profiles.timestamps.clone(),
        profiles.spacing_minutes(),
        phases.iter().map(|&p| feeder.is_zero_injection(p)).collect(),
        (0..phases.len()).filter(|&i| phases[i].bus == 0).collect(),
    )?;
    Ok((x, meta))
}

/// Generator stream used by [`add_noise`]. Solver restarts draw from streams
/// `0, 1, …` of the same seed, so one run seed can drive both.
pub const NOISE_STREAM: u64 = 1 << 40;

/// Multiplies every observed entry by `1 + percent/100 · g` with `g`
/// standard normal. One draw is taken per entry in storage order whether or
/// not it is observed, so an entry's perturbation does not depend on the mask.
pub fn add_noise<T: Scalar>(x: &Tensor3<T>, mask: &MaskTensor, percent: f64, seed: u64) -> Result<Tensor3<T>, FeederError> {
    if x.dims() != mask.dims() {
        return Err(TensorError::DimMismatch(x.dims(), mask.dims()).into());
    }
    if !(percent >= 0.0 && percent.is_finite()) {
        return Err(FeederError::Invalid(format!("noise percent must be finite and >= 0, got {percent}")));
    }
    if percent == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    let rel = percent / 100.0;
    let data = x
        .storage()
        .iter()
        .zip(mask.storage())
        .map(|(&v, &observed)| {
            let g: f64 = StandardNormal.sample(&mut rng);
            if observed {
                v * T::of(1.0 + rel * g)
            } else {
                v
            }
        })
        .collect();
    Ok(Tensor3::from_storage(x.dims(), data)?)
}

/// Marks `p` and `q` of every zero-injection phase as known at all times.
pub fn zero_injection_extras(meta: &StateTensorMeta) -> Result<MaskTensor, TensorError> {
    MaskTensor::from_fn(meta.dims(), |i, j, _| meta.zero_injection[i] && (j == P || j == Q))
}
