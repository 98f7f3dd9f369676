//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 1000            # run r uses seed + r
//! runs = 50
//! rank = 11
//! noise_percent = 0.0
//! out = "out/slab"
//!
//! [feeder]
//! builtin = "default"    # or "tiny"; `file = "..."` loads a feeder model
//!
//! [profiles]
//! mode = "consecutive"
//! steps = 72
//! seed = 7
//!
//! [scheme]
//! kind = "slab"          # slack phases + (phases − 3) random loaded phases,
//! phases = 16            # `times` equally spaced snapshots
//! times = 3
//!
//! [fit]
//! restarts = 1
//!
//! [metrics]
//! scope = "held-out"
//! ```
//!
//! Relative `file` paths resolve against the config file's directory; `out`
//! resolves against the working directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tensorse::cpd::{FitOptions, InitStrategy};
use tensorse::feeder::ProfileMode;
use tensorse::metrics::Scope;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    #[serde(default = "one")]
    pub runs: usize,
    pub rank: usize,
    #[serde(default)]
    pub noise_percent: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub feeder: FeederConfig,
    #[serde(default)]
    pub profiles: ProfileConfig,
    pub scheme: Option<SchemeConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Sampling levels for measurement-percentage curves.
    pub sweep: Option<SweepConfig>,
    pub rank_sweep: Option<RankSweepConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederConfig {
    pub builtin: Option<String>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_profile_seed")]
    pub seed: u64,
}

fn default_mode() -> String {
    "consecutive".into()
}

fn default_steps() -> usize {
    tensorse::feeder::DEFAULT_STEPS
}

fn default_profile_seed() -> u64 {
    7
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { mode: default_mode(), steps: default_steps(), seed: default_profile_seed() }
    }
}

impl ProfileConfig {
    pub fn mode(&self) -> Result<ProfileMode, CliError> {
        self.mode.parse().map_err(|e| CliError::Config(format!("profiles.mode: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Slab,
    Fiber,
}

/// Which fiber pattern is drawn at random; the other one covers the slack
/// phases plus every phase left over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberChoice {
    /// Random phases get `p`, `q`; the rest get `Re v`, `Im v`, `|v|`.
    #[default]
    Power,
    /// Random phases get the voltage triple; the rest get `p`, `q`.
    Voltage,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Randomly drawn phases per run, slack phases included.
    pub phases: Option<usize>,
    /// Slab only: equally spaced frontal slabs.
    pub times: Option<usize>,
    /// Fiber only.
    #[serde(default)]
    pub chosen: FiberChoice,
    /// A fixed scheme file (one-based indices) used for every run.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub max_sweeps: Option<usize>,
    pub rel_tol: Option<f64>,
    pub restarts: Option<usize>,
    pub ridge: Option<f64>,
    pub init_scale: Option<f64>,
    #[serde(default = "default_init")]
    pub init: String,
}

fn default_init() -> String {
    "complete-block".into()
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_sweeps: None, rel_tol: None, restarts: None, ridge: None, init_scale: None, init: default_init() }
    }
}

impl FitConfig {
    pub fn options(&self, seed: u64) -> Result<FitOptions, CliError> {
        let d = FitOptions::default();
        let init = match self.init.as_str() {
            "complete-block" => InitStrategy::CompleteBlock,
            "random" => InitStrategy::Random,
            other => return Err(CliError::Config(format!("fit.init: unknown strategy `{other}`"))),
        };
        let opts = FitOptions {
            max_sweeps: self.max_sweeps.unwrap_or(d.max_sweeps),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed,
            init_scale: self.init_scale,
            init,
            ridge: self.ridge.unwrap_or(d.ridge),
        };
        opts.validate().map_err(|e| CliError::Config(format!("fit: {e}")))?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_scope")]
    pub scope: String,
    /// Treat `p = q = 0` of zero-injection phases as observed.
    #[serde(default = "yes")]
    pub zero_injection_known: bool,
}

fn default_scope() -> String {
    "held-out".into()
}

fn yes() -> bool {
    true
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { scope: default_scope(), zero_injection_known: true }
    }
}

impl MetricsConfig {
    pub fn scope(&self) -> Result<Scope, CliError> {
        match self.scope.as_str() {
            "held-out" => Ok(Scope::HeldOut),
            "all-entries" => Ok(Scope::AllEntries),
            other => Err(CliError::Config(format!("metrics.scope: expected `held-out` or `all-entries`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub phases: Vec<usize>,
    /// Slab only, one entry per level.
    #[serde(default)]
    pub times: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSweepConfig {
    pub k_max: usize,
}

/// One sampling level: randomly drawn phases and (slab) snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Level {
    pub phases: usize,
    pub times: usize,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.rank == 0 {
            return bad("rank must be >= 1".into());
        }
        if !(self.noise_percent >= 0.0 && self.noise_percent.is_finite()) {
            return bad(format!("noise_percent must be finite and >= 0, got {}", self.noise_percent));
        }
        match (&self.feeder.builtin, &self.feeder.file) {
            (Some(_), Some(_)) => return bad("feeder: give either `builtin` or `file`, not both".into()),
            (Some(b), None) if b != "default" && b != "tiny" => {
                return bad(format!("feeder.builtin: expected `default` or `tiny`, got `{b}`"))
            }
            _ => {}
        }
        self.profiles.mode()?;
        if self.profiles.steps == 0 {
            return bad("profiles.steps must be >= 1".into());
        }
        self.fit.options(self.seed)?;
        self.metrics.scope()?;
        if let Some(s) = &self.scheme {
            match (s.kind, &s.file, s.phases, s.times) {
                (_, Some(_), None, None) => {}
                (_, Some(_), _, _) => return bad("scheme: `file` excludes `phases` and `times`".into()),
                (SchemeKind::Slab, None, Some(_), Some(_)) => {}
                (SchemeKind::Slab, None, _, _) => return bad("slab scheme needs `phases` and `times` (or `file`)".into()),
                (SchemeKind::Fiber, None, Some(_), None) => {}
                (SchemeKind::Fiber, None, _, Some(_)) => return bad("fiber scheme takes no `times`".into()),
                (SchemeKind::Fiber, None, None, _) => return bad("fiber scheme needs `phases` (or `file`)".into()),
            }
        }
        if let Some(sw) = &self.sweep {
            let Some(s) = &self.scheme else { return bad("[sweep] needs a [scheme]".into()) };
            if s.file.is_some() {
                return bad("[sweep] draws schemes at random; drop scheme.file".into());
            }
            if sw.phases.is_empty() {
                return bad("sweep.phases is empty".into());
            }
            match s.kind {
                SchemeKind::Slab if sw.times.len() != sw.phases.len() => {
                    return bad("sweep.times must have one entry per sweep.phases entry".into())
                }
                SchemeKind::Fiber if !sw.times.is_empty() => return bad("fiber sweeps take no `times`".into()),
                _ => {}
            }
        }
        if let Some(r) = &self.rank_sweep {
            if r.k_max == 0 {
                return bad("rank_sweep.k_max must be >= 1".into());
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn scheme(&self) -> Result<&SchemeConfig, CliError> {
        self.scheme.as_ref().ok_or_else(|| CliError::Config("this command needs a [scheme] table".into()))
    }

    /// The configured level, then any sweep levels.
    pub fn levels(&self) -> Result<Vec<Level>, CliError> {
        let s = self.scheme()?;
        match &self.sweep {
            Some(sw) => Ok(sw
                .phases
                .iter()
                .enumerate()
                .map(|(n, &phases)| Level { phases, times: sw.times.get(n).copied().unwrap_or(0) })
                .collect()),
            None => Ok(vec![Level { phases: s.phases.unwrap_or(0), times: s.times.unwrap_or(0) }]),
        }
    }
}
