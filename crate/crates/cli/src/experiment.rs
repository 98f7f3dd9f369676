//! Monte-Carlo scenarios: per-run scheme draws, fits and metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensorse::cpd::{masked_als_fit, FitResult};
use tensorse::feeder::{
    add_noise, default_feeder, parse_feeder, simulate, tiny_feeder, zero_injection_extras, FeederModel, ProfileSet,
    StateTensorMeta,
};
use tensorse::metrics::{aggregate, evaluate_excluding, Aggregate, MetricsReport};
use tensorse::sampling::{equally_spaced, parse_scheme, sampling_fraction, FiberScheme, Scheme, SlabScheme};
use tensorse::tensor::{MaskTensor, Tensor3};

use crate::config::{Config, FiberChoice, Level, SchemeKind};
use crate::CliError;

/// A scenario fails when more than this share of its runs did not converge.
pub const MAX_FAILED_SHARE: f64 = 0.2;

/// Stream of the run seed used for phase selection; noise and solver
/// restarts use other streams of the same seed.
const SELECTION_STREAM: u64 = 1 << 41;

/// Voltage columns `Re v`, `Im v`, `|v|` and power columns `p`, `q`.
const VOLTAGE_COLS: [usize; 3] = [0, 1, 2];
const POWER_COLS: [usize; 2] = [3, 4];

pub struct Dataset {
    pub feeder: FeederModel,
    pub profiles: ProfileSet,
    pub truth: Tensor3<f64>,
    pub meta: StateTensorMeta,
    /// Known-zero `p`, `q` of zero-injection phases.
    pub extras: MaskTensor,
}

pub fn load_feeder(cfg: &Config) -> Result<FeederModel, CliError> {
    match (&cfg.feeder.builtin, &cfg.feeder.file) {
        (_, Some(file)) => {
            let path = cfg.resolve(file);
            let f = std::fs::File::open(&path)
                .map_err(|e| CliError::Config(format!("cannot open feeder {}: {e}", path.display())))?;
            parse_feeder(std::io::BufReader::new(f)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
        (Some(b), None) if b == "tiny" => Ok(tiny_feeder()),
        _ => Ok(default_feeder()),
    }
}

pub fn build_dataset(cfg: &Config) -> Result<Dataset, CliError> {
    let feeder = load_feeder(cfg)?;
    let profiles = ProfileSet::generate(&feeder, cfg.profiles.mode()?, cfg.profiles.steps, cfg.profiles.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (truth, meta) = simulate(&feeder, &profiles).map_err(|e| CliError::Simulation(e.to_string()))?;
    let extras = zero_injection_extras(&meta).map_err(|e| CliError::Simulation(e.to_string()))?;
    Ok(Dataset { feeder, profiles, truth, meta, extras })
}

/// The scheme for run seed `seed`: the configured file, or the slack phases
/// plus `level.phases − slack` loaded phases drawn at random.
pub fn draw_scheme(cfg: &Config, ds: &Dataset, level: Level, seed: u64) -> Result<Scheme, CliError> {
    let sc = cfg.scheme()?;
    let dims = ds.truth.dims();
    if let Some(file) = &sc.file {
        let path = cfg.resolve(file);
        let f = std::fs::File::open(&path)
            .map_err(|e| CliError::Config(format!("cannot open scheme {}: {e}", path.display())))?;
        let scheme = parse_scheme(std::io::BufReader::new(f))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if scheme.dims() != dims {
            return Err(CliError::Config(format!("scheme dims {:?} do not match the tensor {:?}", scheme.dims(), dims)));
        }
        return Ok(scheme);
    }
    let slack = &ds.meta.slack_phases;
    let mut load = ds.meta.load_phases();
    let extra = level.phases.checked_sub(slack.len()).filter(|&n| n <= load.len()).ok_or_else(|| {
        CliError::Config(format!(
            "cannot draw {} phases: {} slack phases plus at most {} loaded ones",
            level.phases,
            slack.len(),
            load.len()
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SELECTION_STREAM);
    load.shuffle(&mut rng);
    let chosen: Vec<usize> = slack.iter().copied().chain(load[..extra].iter().copied()).collect();
    let scheme = match sc.kind {
        SchemeKind::Slab => {
            if level.times == 0 || level.times > dims.2 {
                return Err(CliError::Config(format!("cannot pick {} of {} time steps", level.times, dims.2)));
            }
            Scheme::Slab(SlabScheme::new(dims, chosen, equally_spaced(dims.2, level.times))?)
        }
        SchemeKind::Fiber => {
            let rest: Vec<usize> = (0..dims.0).filter(|i| slack.contains(i) || !chosen.contains(i)).collect();
            let (voltage_rows, power_rows) = match sc.chosen {
                FiberChoice::Power => (rest, chosen),
                FiberChoice::Voltage => (chosen, rest),
            };
            Scheme::Fiber(FiberScheme::new(
                dims,
                [(voltage_rows, VOLTAGE_COLS.to_vec()), (power_rows, POWER_COLS.to_vec())],
            )?)
        }
    };
    Ok(scheme)
}

/// The scheme mask, plus the zero-injection extras when configured.
pub fn observation_mask(cfg: &Config, ds: &Dataset, scheme: &Scheme) -> Result<MaskTensor, CliError> {
    let mask = scheme.mask()?;
    if cfg.metrics.zero_injection_known {
        Ok(mask.union(&ds.extras)?)
    } else {
        Ok(mask)
    }
}

/// Percentage of the tensor observed under `scheme`, extras included when
/// configured.
pub fn measurement_pct(cfg: &Config, ds: &Dataset, scheme: &Scheme) -> Result<f64, CliError> {
    let extras = cfg.metrics.zero_injection_known.then_some(&ds.extras);
    Ok(sampling_fraction(&scheme.mask()?, extras)?)
}

pub struct RunInputs {
    pub seed: u64,
    pub scheme: Scheme,
    pub mask: MaskTensor,
    pub observed: Tensor3<f64>,
}

pub fn run_inputs(cfg: &Config, ds: &Dataset, level: Level, run: usize) -> Result<RunInputs, CliError> {
    let seed = cfg.seed.wrapping_add(run as u64);
    let scheme = draw_scheme(cfg, ds, level, seed)?;
    let mask = observation_mask(cfg, ds, &scheme)?;
    let observed = add_noise(&ds.truth, &mask, cfg.noise_percent, seed).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(RunInputs { seed, scheme, mask, observed })
}

pub fn fit_run(cfg: &Config, inputs: &RunInputs) -> Result<FitResult<f64>, CliError> {
    let opts = cfg.fit.options(inputs.seed)?;
    masked_als_fit(&inputs.observed, &inputs.mask, cfg.rank, &opts).map_err(|e| CliError::Solver(e.to_string()))
}

#[derive(Debug, Clone)]
pub enum RunStatus {
    Ok(MetricsReport),
    /// The solver stopped at `max_sweeps` before meeting `rel_tol`.
    NotConverged,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub sweeps: usize,
    pub objective: Option<f64>,
    pub status: RunStatus,
}

pub struct ScenarioResult {
    pub level: Level,
    pub measurement_pct: f64,
    pub records: Vec<RunRecord>,
    /// Over converged runs; `None` when none converged.
    pub aggregate: Option<Aggregate>,
}

impl ScenarioResult {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| !matches!(r.status, RunStatus::Ok(_))).count()
    }

    pub fn failed_share(&self) -> f64 {
        self.failed() as f64 / self.records.len().max(1) as f64
    }

    pub fn passes_failure_policy(&self) -> bool {
        self.failed_share() <= MAX_FAILED_SHARE && self.aggregate.is_some()
    }
}

pub fn run_one(cfg: &Config, ds: &Dataset, level: Level, run: usize) -> Result<RunRecord, CliError> {
    let inputs = run_inputs(cfg, ds, level, run)?;
    let scope = cfg.metrics.scope()?;
    let record = |sweeps, objective, status| RunRecord { run, seed: inputs.seed, sweeps, objective, status };
    Ok(match fit_run(cfg, &inputs) {
        Err(e) => record(0, None, RunStatus::Failed(e.to_string())),
        Ok(fit) if !fit.converged => record(fit.sweeps_used, Some(fit.objective()), RunStatus::NotConverged),
        Ok(fit) => {
            let report =
                evaluate_excluding(&ds.truth, &fit.reconstruct(), &inputs.mask, &ds.meta, scope, &fit.undetermined)
                    .map_err(|e| CliError::Solver(e.to_string()))?;
            record(fit.sweeps_used, Some(fit.objective()), RunStatus::Ok(report))
        }
    })
}

/// Runs `cfg.runs` seeded runs at one level. Non-convergent runs are kept in
/// `records` and left out of the aggregate.
pub fn run_scenario(
    cfg: &Config,
    ds: &Dataset,
    level: Level,
    mut progress: impl FnMut(&RunRecord),
) -> Result<ScenarioResult, CliError> {
    let first = draw_scheme(cfg, ds, level, cfg.seed)?;
    let measurement_pct = measurement_pct(cfg, ds, &first)?;
    let mut records = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let rec = run_one(cfg, ds, level, run)?;
        progress(&rec);
        records.push(rec);
    }
    let reports: Vec<MetricsReport> = records
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Ok(m) => Some(m.clone()),
            _ => None,
        })
        .collect();
    let aggregate = if reports.is_empty() { None } else { Some(aggregate(&reports).expect("nonempty, one scope")) };
    Ok(ScenarioResult { level, measurement_pct, records, aggregate })
}
