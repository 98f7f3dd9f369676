//! Imputation error metrics and their aggregation over Monte-Carlo runs.
//!
//! * `|V|`: mean absolute percentage error.
//! * angle: mean absolute error in degrees of `atan2(Im v, Re v)`, with
//!   differences wrapped to `(−180°, 180°]`.
//! * `p`, `q`: mean absolute error (kW, kVAr) over phases with a load.
//!
//! In held-out scope an entry counts only if it is unobserved; an angle
//! counts only if both `Re v` and `Im v` are unobserved, so observed values
//! never influence a held-out metric. A metric with nothing to evaluate is
//! `None`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::feeder::{StateTensorMeta, IM_V, P, Q, RE_V, VMAG};
use crate::tensor::{Dims, MaskTensor, Tensor3};

pub const METRIC_NAMES: [&str; 4] = ["mape_vmag", "mae_angle", "mae_p", "mae_q"];
pub const METRIC_UNITS: [&str; 4] = ["%", "deg", "kW", "kVAr"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch(Dims, Dims),
    #[error("true |V| is zero at phase {phase}, step {step}")]
    ZeroDenominator { phase: usize, step: usize },
    #[error("cannot aggregate zero runs")]
    NoRuns,
    #[error("runs mix held-out and all-entries scopes")]
    MixedScopes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Entries with mask value 0.
    #[default]
    HeldOut,
    AllEntries,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::HeldOut => "held-out",
            Self::AllEntries => "all-entries",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mape_vmag: Option<f64>,
    pub mae_angle: Option<f64>,
    pub mae_p: Option<f64>,
    pub mae_q: Option<f64>,
    /// Entries evaluated per metric, in [`METRIC_NAMES`] order.
    pub counts: [usize; 4],
    pub scope: Scope,
}

impl MetricsReport {
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.mape_vmag, self.mae_angle, self.mae_p, self.mae_q]
    }

    pub fn to_key_value(&self) -> String {
        let mut s = format!("scope={}\n", self.scope.as_str());
        for ((name, v), n) in METRIC_NAMES.iter().zip(self.values()).zip(self.counts) {
            let _ = writeln!(s, "{name}={}", fmt_opt(v));
            let _ = writeln!(s, "{name}.count={n}");
        }
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |v| v.to_string())
}

/// Reduces an angle difference in degrees to `(−180, 180]`.
pub fn wrap_degrees(d: f64) -> f64 {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

pub fn evaluate(
    truth: &Tensor3<f64>,
    estimate: &Tensor3<f64>,
    mask: &MaskTensor,
    meta: &StateTensorMeta,
    scope: Scope,
) -> Result<MetricsReport, MetricsError> {
    evaluate_excluding(truth, estimate, mask, meta, scope, &Default::default())
}

/// As [`evaluate`], skipping the factor rows a masked fit could not
/// determine: listed phases (mode 1), measurements (mode 2) and time steps
/// (mode 3) are left out of every metric.
pub fn evaluate_excluding(
    truth: &Tensor3<f64>,
    estimate: &Tensor3<f64>,
    mask: &MaskTensor,
    meta: &StateTensorMeta,
    scope: Scope,
    undetermined: &[Vec<usize>; 3],
) -> Result<MetricsReport, MetricsError> {
    let dims = truth.dims();
    for other in [estimate.dims(), mask.dims(), meta.dims()] {
        if other != dims {
            return Err(MetricsError::DimMismatch(dims, other));
        }
    }
    let (ni, _, nk) = dims;
    let skip_phase: Vec<bool> = (0..ni).map(|i| undetermined[0].contains(&i)).collect();
    let skip_meas = |j: usize| undetermined[1].contains(&j);
    let skip_time: Vec<bool> = (0..nk).map(|k| undetermined[2].contains(&k)).collect();
    let wanted = |i: usize, j: usize, k: usize| match scope {
        Scope::HeldOut => !mask.get(i, j, k),
        Scope::AllEntries => true,
    };

    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for k in (0..nk).filter(|&k| !skip_time[k]) {
        for i in (0..ni).filter(|&i| !skip_phase[i]) {
            if !skip_meas(VMAG) && wanted(i, VMAG, k) {
                let t = truth.get(i, VMAG, k);
                if t == 0.0 {
                    return Err(MetricsError::ZeroDenominator { phase: i, step: k });
                }
                sums[0] += ((t - estimate.get(i, VMAG, k)) / t).abs() * 100.0;
                counts[0] += 1;
            }
            if !skip_meas(RE_V) && !skip_meas(IM_V) && wanted(i, RE_V, k) && wanted(i, IM_V, k) {
                let angle = |x: &Tensor3<f64>| x.get(i, IM_V, k).atan2(x.get(i, RE_V, k)).to_degrees();
                sums[1] += wrap_degrees(angle(truth) - angle(estimate)).abs();
                counts[1] += 1;
            }
            if meta.zero_injection[i] {
                continue;
            }
            for (slot, j) in [(2, P), (3, Q)] {
                if !skip_meas(j) && wanted(i, j, k) {
                    sums[slot] += (truth.get(i, j, k) - estimate.get(i, j, k)).abs();
                    counts[slot] += 1;
                }
            }
        }
    }
    let mean = |m: usize| (counts[m] > 0).then(|| sums[m] / counts[m] as f64);
    Ok(MetricsReport { mape_vmag: mean(0), mae_angle: mean(1), mae_p: mean(2), mae_q: mean(3), counts, scope })
}

/// Mean and sample standard deviation of each metric across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub scope: Scope,
    pub runs: usize,
    pub mean: [Option<f64>; 4],
    pub std: [Option<f64>; 4],
    /// Runs in which each metric was defined.
    pub defined: [usize; 4],
    /// Evaluated entries per metric, summed over runs.
    pub counts: [usize; 4],
}

/// Aggregates runs. Values are sorted before summation, so the result does
/// not depend on run order.
pub fn aggregate(runs: &[MetricsReport]) -> Result<Aggregate, MetricsError> {
    let scope = runs.first().ok_or(MetricsError::NoRuns)?.scope;
    if runs.iter().any(|r| r.scope != scope) {
        return Err(MetricsError::MixedScopes);
    }
    let mut out = Aggregate { scope, runs: runs.len(), mean: [None; 4], std: [None; 4], defined: [0; 4], counts: [0; 4] };
    for m in 0..4 {
        let mut vals: Vec<f64> = runs.iter().filter_map(|r| r.values()[m]).collect();
        vals.sort_by(f64::total_cmp);
        out.counts[m] = runs.iter().map(|r| r.counts[m]).sum();
        out.defined[m] = vals.len();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let mut dev: Vec<f64> = vals.iter().map(|v| (v - mean).powi(2)).collect();
        dev.sort_by(f64::total_cmp);
        let var = if vals.len() > 1 { dev.iter().sum::<f64>() / (n - 1.0) } else { 0.0 };
        out.mean[m] = Some(mean);
        out.std[m] = Some(var.sqrt());
    }
    Ok(out)
}

impl Aggregate {
    pub fn to_key_value(&self) -> String {
        let mut s = format!("scope={}\nruns={}\n", self.scope.as_str(), self.runs);
        for m in 0..4 {
            let name = METRIC_NAMES[m];
            let _ = writeln!(s, "{name}.mean={}", fmt_opt(self.mean[m]));
            let _ = writeln!(s, "{name}.std={}", fmt_opt(self.std[m]));
            let _ = writeln!(s, "{name}.runs={}", self.defined[m]);
            let _ = writeln!(s, "{name}.count={}", self.counts[m]);
        }
        s
    }
}

/// Aligned table, one row per scenario, each cell `mean ± std`.
pub fn format_table(rows: &[(String, Aggregate)]) -> String {
    let header = ["scenario", "|V| MAPE (%)", "angle MAE (deg)", "P MAE (kW)", "Q MAE (kVAr)", "runs"];
    let cell = |a: &Aggregate, m: usize| match (a.mean[m], a.std[m]) {
        (Some(mu), Some(sd)) => format!("{mu:.4e} ± {sd:.1e}"),
        _ => "undefined".to_owned(),
    };
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, a)| {
            let mut r = vec![name.clone()];
            r.extend((0..4).map(|m| cell(a, m)));
            r.push(a.runs.to_string());
            r
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_owned() + "\n"
    };
    let mut s = line(header.to_vec());
    s += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in &body {
        s += &line(r.iter().map(String::as_str).collect());
    }
    s
}

pub const CURVE_HEADER: &str = "scenario,measurement_pct,metric,mean,std,runs";

/// Plot-ready rows: one per metric for a scenario at one sampling level.
pub fn curve_rows(scenario: &str, measurement_pct: f64, agg: &Aggregate) -> Vec<String> {
    (0..4)
        .map(|m| {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            format!("{scenario},{measurement_pct},{},{},{},{}", METRIC_NAMES[m], opt(agg.mean[m]), opt(agg.std[m]), agg.defined[m])
        })
        .collect()
}
