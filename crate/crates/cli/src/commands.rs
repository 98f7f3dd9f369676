//! Subcommand bodies. Files carry no timings; progress goes to stderr.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use tensorse::cpd::{rank_sweep, read_fit_record, write_fit_record, FitResult};
use tensorse::feeder::{write_feeder, write_state_csv};
use tensorse::metrics::{curve_rows, evaluate_excluding, format_table, Aggregate, CURVE_HEADER};
use tensorse::sampling::{write_scheme, IdentifiabilityReport, Scheme};
use tensorse::tensor::write_text;

use crate::config::{Config, Level, SchemeKind};
use crate::experiment::{
    build_dataset, draw_scheme, fit_run, measurement_pct, run_inputs, run_scenario, Dataset, RunStatus,
    ScenarioResult, MAX_FAILED_SHARE,
};
use crate::output::OutDir;
use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub override_identifiability: bool,
}

impl Global {
    pub fn load(&self) -> Result<Config, CliError> {
        let path = self.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
        let mut cfg = Config::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

fn dataset(cfg: &Config) -> Result<Dataset, CliError> {
    let t = Instant::now();
    let ds = build_dataset(cfg)?;
    let (i, j, k) = ds.truth.dims();
    eprintln!("simulated {i}×{j}×{k} state tensor in {:.2?}", t.elapsed());
    Ok(ds)
}

pub fn simulate(g: &Global) -> Result<(), CliError> {
    let cfg = g.load()?;
    let ds = dataset(&cfg)?;
    let out = OutDir::create(&cfg.out)?;
    out.write_with("tensor.txt", |w| Ok(write_text(&ds.truth, w)?))?;
    out.write("meta.json", &ds.meta.to_json())?;
    out.write_with("states.csv", |w| write_state_csv(&ds.truth, &ds.meta, None, w).map_err(|e| CliError::Io(e.to_string())))?;
    out.write_with("feeder.txt", |w| write_feeder(&ds.feeder, w).map_err(|e| CliError::Io(e.to_string())))?;
    eprintln!("wrote {}", cfg.out.display());
    Ok(())
}

fn level_name(kind: SchemeKind, level: Level) -> String {
    match kind {
        SchemeKind::Slab => format!("slab-{}x{}", level.phases, level.times),
        SchemeKind::Fiber => format!("fiber-{}", level.phases),
    }
}

/// Certification of every level; the scheme sizes do not depend on the draw,
/// so the run-0 scheme stands for all runs.
fn certify(cfg: &Config, ds: &Dataset) -> Result<Vec<(String, Scheme, IdentifiabilityReport)>, CliError> {
    let kind = cfg.scheme()?.kind;
    cfg.levels()?
        .into_iter()
        .map(|level| {
            let scheme = draw_scheme(cfg, ds, level, cfg.seed)?;
            let report = scheme.check(cfg.rank);
            let name = if cfg.scheme()?.file.is_some() { format!("{}-file", scheme.kind()) } else { level_name(kind, level) };
            Ok((name, scheme, report))
        })
        .collect()
}

fn certification_text(cfg: &Config, reports: &[(String, Scheme, IdentifiabilityReport)]) -> String {
    let mut s = String::new();
    for (name, _, r) in reports {
        let _ = writeln!(s, "# {name}, rank {}", cfg.rank);
        s += &r.to_string();
        s += &r.to_key_value();
        s.push('\n');
    }
    s
}

fn first_failure(reports: &[(String, Scheme, IdentifiabilityReport)]) -> Option<String> {
    reports.iter().find(|(_, _, r)| !r.satisfied).map(|(name, _, r)| {
        match r.first_violation() {
            Some(c) => format!("{name}: violated {}: {} = {} {} {}", c.label, c.formula, c.lhs, c.relation.symbol(), c.rhs),
            None => format!("{name}: {}", r.which_condition),
        }
    })
}

pub fn check(g: &Global) -> Result<(), CliError> {
    let cfg = g.load()?;
    let ds = dataset(&cfg)?;
    let reports = certify(&cfg, &ds)?;
    let text = certification_text(&cfg, &reports);
    print!("{text}");
    OutDir::create(&cfg.out)?.write("certification.txt", &text)?;
    match first_failure(&reports) {
        Some(msg) => Err(CliError::Certification(msg)),
        None => Ok(()),
    }
}

fn single_level(cfg: &Config) -> Result<Level, CliError> {
    match cfg.levels()?.as_slice() {
        [level] => Ok(*level),
        _ => Err(CliError::Usage("this command uses one sampling level; drop [sweep]".into())),
    }
}

pub fn sample(g: &Global, run: usize) -> Result<(), CliError> {
    let cfg = g.load()?;
    let ds = dataset(&cfg)?;
    let inputs = run_inputs(&cfg, &ds, single_level(&cfg)?, run)?;
    let out = OutDir::create(&cfg.out)?;
    out.write_with("scheme.txt", |w| Ok(write_scheme(&inputs.scheme, w)?))?;
    out.write_with("mask.txt", |w| Ok(write_text(&inputs.mask.to_tensor::<f64>(), w)?))?;
    eprintln!(
        "run {run}: {} scheme, {:.4}% observed",
        inputs.scheme.kind(),
        measurement_pct(&cfg, &ds, &inputs.scheme)?
    );
    Ok(())
}

fn require_certified(cfg: &Config, ds: &Dataset, g: &Global) -> Result<String, CliError> {
    let reports = certify(cfg, ds)?;
    let text = certification_text(cfg, &reports);
    if let Some(msg) = first_failure(&reports) {
        if !g.override_identifiability {
            return Err(CliError::Certification(format!("{msg}; pass --override-identifiability to run anyway")));
        }
        eprintln!("warning: running an uncertified scheme ({msg})");
    }
    Ok(text)
}

pub fn fit(g: &Global, run: usize) -> Result<(), CliError> {
    let cfg = g.load()?;
    let ds = dataset(&cfg)?;
    let certification = require_certified(&cfg, &ds, g)?;
    let inputs = run_inputs(&cfg, &ds, single_level(&cfg)?, run)?;
    let t = Instant::now();
    let result = fit_run(&cfg, &inputs);
    let out = OutDir::create(&cfg.out)?;
    out.write("certification.txt", &certification)?;
    let fit = result?;
    eprintln!(
        "run {run}: objective {:e}, {} sweeps, converged {} in {:.2?}",
        fit.objective(),
        fit.sweeps_used,
        fit.converged,
        t.elapsed()
    );
    out.write_with("fit.txt", |w| Ok(write_fit_record(&fit, w)?))?;
    out.write("run.txt", &format!("run={run}\nseed={}\n", inputs.seed))?;
    if !fit.converged {
        return Err(CliError::Solver(format!("run {run} did not converge within {} sweeps", fit.sweeps_used)));
    }
    Ok(())
}

pub fn evaluate(g: &Global) -> Result<(), CliError> {
    let cfg = g.load()?;
    let out = OutDir::create(&cfg.out)?;
    let run_text = std::fs::read_to_string(out.path("run.txt"))
        .map_err(|e| CliError::Io(format!("{}: {e} (run `fit` first)", out.path("run.txt").display())))?;
    let run = run_text
        .lines()
        .find_map(|l| l.strip_prefix("run="))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| CliError::Io(format!("{}: no `run=` line", out.path("run.txt").display())))?;
    let file = std::fs::File::open(out.path("fit.txt"))
        .map_err(|e| CliError::Io(format!("{}: {e}", out.path("fit.txt").display())))?;
    let fit: FitResult<f64> = read_fit_record(std::io::BufReader::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", out.path("fit.txt").display())))?;
    let ds = dataset(&cfg)?;
    let inputs = run_inputs(&cfg, &ds, single_level(&cfg)?, run)?;
    let report = evaluate_excluding(
        &ds.truth,
        &fit.reconstruct(),
        &inputs.mask,
        &ds.meta,
        cfg.metrics.scope()?,
        &fit.undetermined,
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;
    let text = report.to_key_value();
    print!("{text}");
    out.write("metrics.txt", &text)?;
    Ok(())
}

pub fn sweep_rank(g: &Global, k_max: Option<usize>) -> Result<(), CliError> {
    let cfg = g.load()?;
    let k_max = k_max
        .or(cfg.rank_sweep.as_ref().map(|r| r.k_max))
        .ok_or_else(|| CliError::Usage("give --k-max or a [rank_sweep] table".into()))?;
    let ds = dataset(&cfg)?;
    let opts = cfg.fit.options(cfg.seed)?;
    let t = Instant::now();
    let points = rank_sweep(&ds.truth, k_max, &opts).map_err(|e| CliError::Solver(e.to_string()))?;
    eprintln!("rank sweep to {k_max} in {:.2?}", t.elapsed());
    let mut csv = String::from("rank,relative_error,source\n");
    let mut failed = Vec::new();
    for p in &points {
        match &p.relative_error {
            Ok(e) => {
                let _ = writeln!(csv, "{},{e},{}", p.rank, p.source);
            }
            Err(e) => {
                let _ = writeln!(csv, "{},,{}", p.rank, p.source);
                failed.push(format!("rank {}: {e}", p.rank));
            }
        }
    }
    print!("{csv}");
    OutDir::create(&cfg.out)?.write("rank_sweep.csv", &csv)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failed.join("; ")))
    }
}

const RUNS_HEADER: &str = "scenario,run,seed,status,sweeps,objective,mape_vmag,mae_angle,mae_p,mae_q";

fn runs_rows(name: &str, sc: &ScenarioResult, csv: &mut String) {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in &sc.records {
        let (status, values) = match &r.status {
            RunStatus::Ok(m) => ("ok", m.values()),
            RunStatus::NotConverged => ("not-converged", [None; 4]),
            RunStatus::Failed(_) => ("failed", [None; 4]),
        };
        let _ = write!(csv, "{name},{},{},{status},{},{}", r.run, r.seed, r.sweeps, opt(r.objective));
        for v in values {
            let _ = write!(csv, ",{}", opt(v));
        }
        csv.push('\n');
    }
}

/// Outcome of `run`, for callers that want the numbers as well as the files.
pub struct RunSummary {
    pub scenarios: Vec<(String, ScenarioResult)>,
}

impl RunSummary {
    pub fn aggregate(&self, name: &str) -> Option<&Aggregate> {
        self.scenarios.iter().find(|(n, _)| n == name).and_then(|(_, s)| s.aggregate.as_ref())
    }
}

pub fn run(g: &Global) -> Result<RunSummary, CliError> {
    let cfg = g.load()?;
    let ds = dataset(&cfg)?;
    let certification = require_certified(&cfg, &ds, g)?;
    let out = OutDir::create(&cfg.out)?;
    out.write("certification.txt", &certification)?;
    let kind = cfg.scheme()?.kind;

    let mut scenarios = Vec::new();
    for level in cfg.levels()? {
        let name = level_name(kind, level);
        let t = Instant::now();
        let sc = run_scenario(&cfg, &ds, level, |r| {
            let status = match &r.status {
                RunStatus::Ok(m) => format!("mape_vmag {}", m.mape_vmag.map_or("undefined".into(), |v| format!("{v:.4}"))),
                RunStatus::NotConverged => "not converged".into(),
                RunStatus::Failed(e) => format!("failed: {e}"),
            };
            eprintln!("{name} run {}: {} sweeps, {status}", r.run, r.sweeps);
        })?;
        eprintln!("{name}: {} runs in {:.2?}", sc.records.len(), t.elapsed());
        if sc.failed() > 0 {
            eprintln!("warning: {name}: {} of {} runs did not converge and are excluded", sc.failed(), sc.records.len());
        }
        scenarios.push((name, sc));
    }

    let mut runs_csv = format!("{RUNS_HEADER}\n");
    let mut curve = format!("{CURVE_HEADER}\n");
    let mut table_rows = Vec::new();
    let mut kv = String::new();
    for (name, sc) in &scenarios {
        runs_rows(name, sc, &mut runs_csv);
        let _ = writeln!(kv, "[{name}]");
        let _ = writeln!(kv, "measurement_pct={}", sc.measurement_pct);
        let _ = writeln!(kv, "excluded_runs={}", sc.failed());
        let _ = writeln!(kv, "policy={}", if sc.passes_failure_policy() { "ok" } else { "failed" });
        if let Some(a) = &sc.aggregate {
            kv += &a.to_key_value();
            table_rows.push((name.clone(), a.clone()));
            for row in curve_rows(name, sc.measurement_pct, a) {
                curve += &row;
                curve.push('\n');
            }
        }
        kv.push('\n');
    }
    let table = format_table(&table_rows);
    print!("{table}");
    out.write("runs.csv", &runs_csv)?;
    out.write("summary.txt", &format!("{table}\n{kv}"))?;
    out.write("curve.csv", &curve)?;

    let failing: Vec<String> = scenarios
        .iter()
        .filter(|(_, s)| !s.passes_failure_policy())
        .map(|(n, s)| format!("{n}: {} of {} runs did not converge", s.failed(), s.records.len()))
        .collect();
    if !failing.is_empty() {
        return Err(CliError::Solver(format!(
            "more than {}% non-convergent runs ({})",
            MAX_FAILED_SHARE * 100.0,
            failing.join("; ")
        )));
    }
    let _ = std::io::stdout().flush();
    Ok(RunSummary { scenarios })
}

