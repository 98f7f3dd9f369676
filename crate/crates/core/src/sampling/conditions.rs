//! Identifiability certificates: generic CPD uniqueness and the sufficient
//! sampling conditions for slab and fiber schemes.

use std::collections::BTreeSet;
use std::fmt;

use crate::sampling::{FiberScheme, SamplingError, SlabScheme};
use crate::tensor::Dims;

const ASSUMPTION: &str = "assumes factors drawn from an absolutely continuous distribution";

/// `⌊log₂ n⌋`, with `−∞` for `n = 0`.
pub fn floor_log2(n: usize) -> f64 {
    if n == 0 {
        f64::NEG_INFINITY
    } else {
        n.ilog2() as f64
    }
}

fn log2(x: f64) -> f64 {
    x.log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtLeast,
    AtMost,
    Equal,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::AtLeast => lhs >= rhs,
            Relation::AtMost => lhs <= rhs,
            Relation::Equal => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::AtLeast => ">=",
            Relation::AtMost => "<=",
            Relation::Equal => "==",
        }
    }
}

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    /// Stable machine-readable identifier, e.g. `c1.log2_Ih+log2_J`.
    pub label: String,
    /// The expression on the left, with the cardinalities substituted.
    pub formula: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub holds: bool,
}

impl Clause {
    fn new(label: impl Into<String>, formula: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        Self { label: label.into(), formula: formula.into(), lhs, relation, rhs, holds: relation.holds(lhs, rhs) }
    }
}

/// Outcome of an identifiability check with every evaluated term.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport {
    pub satisfied: bool,
    /// The satisfied condition, or the label of the first violated clause.
    pub which_condition: String,
    pub clauses: Vec<Clause>,
}

impl IdentifiabilityReport {
    /// First violated clause, if any.
    pub fn first_violation(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| !c.holds)
    }

    /// `key=value` lines for scripting.
    pub fn to_key_value(&self) -> String {
        let mut s = format!("satisfied={}\nwhich_condition={}\n", self.satisfied, self.which_condition);
        for c in &self.clauses {
            s.push_str(&format!(
                "clause.{}.lhs={}\nclause.{}.rhs={}\nclause.{}.holds={}\n",
                c.label, c.lhs, c.label, c.rhs, c.label, c.holds
            ));
        }
        s
    }
}

impl fmt::Display for IdentifiabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.satisfied { "SATISFIED" } else { "VIOLATED" };
        writeln!(f, "identifiability: {verdict} ({})", self.which_condition)?;
        for c in &self.clauses {
            writeln!(
                f,
                "  [{}] {:<22} {:<34} = {:>9.4} {} {:.4}",
                if c.holds { "ok" } else { "!!" },
                c.label,
                c.formula,
                c.lhs,
                c.relation.symbol(),
                c.rhs
            )?;
        }
        writeln!(f, "  ({ASSUMPTION})")
    }
}

/// Generic uniqueness: with dims sorted so that `I ≥ J ≥ K`,
/// `F ≤ 2^{⌊log₂ J⌋ + ⌊log₂ K⌋ − 2}`.
pub fn generic_identifiability(ni: usize, nj: usize, nk: usize, rank: usize) -> IdentifiabilityReport {
    let mut d = [ni, nj, nk];
    d.sort_unstable_by(|a, b| b.cmp(a));
    let exponent = floor_log2(d[1]) + floor_log2(d[2]) - 2.0;
    let bound = exponent.exp2();
    let clause = Clause::new(
        "generic.rank_bound",
        format!("F (bound 2^({}+{}-2))", floor_log2(d[1]), floor_log2(d[2])),
        rank as f64,
        Relation::AtMost,
        bound,
    );
    let satisfied = clause.holds;
    IdentifiabilityReport {
        satisfied,
        which_condition: if satisfied { "generic".into() } else { clause.label.clone() },
        clauses: vec![clause],
    }
}

/// Evaluates the two slab conditions for `I_h` sampled phases and `K_f`
/// sampled time steps. Returns the clauses of condition 1 then condition 2.
fn slab_clauses(dims: Dims, ih: usize, kf: usize, rank: usize) -> [Vec<Clause>; 2] {
    let (ni, nj, nk) = dims;
    let rhs = log2(4.0 * rank as f64);
    let (l_ih, l_kf, l_i, l_j, l_k) = (floor_log2(ih), floor_log2(kf), floor_log2(ni), floor_log2(nj), floor_log2(nk));
    let c1 = vec![
        Clause::new("c1.log2_Ih+log2_J", format!("fl(log2 {ih}) + fl(log2 {nj})"), l_ih + l_j, Relation::AtLeast, rhs),
        Clause::new("c1.log2_J+log2_K", format!("fl(log2 {nj}) + fl(log2 {nk})"), l_j + l_k, Relation::AtLeast, rhs),
        Clause::new("c1.log2_Ih+log2_K", format!("fl(log2 {ih}) + fl(log2 {nk})"), l_ih + l_k, Relation::AtLeast, rhs),
        Clause::new("c1.log2_4JKf", format!("log2(4*{nj}*{kf})"), log2(4.0 * (nj * kf) as f64), Relation::AtLeast, rhs),
    ];
    let c2 = vec![
        Clause::new("c2.log2_I+log2_J", format!("fl(log2 {ni}) + fl(log2 {nj})"), l_i + l_j, Relation::AtLeast, rhs),
        Clause::new("c2.log2_J+log2_Kf", format!("fl(log2 {nj}) + fl(log2 {kf})"), l_j + l_kf, Relation::AtLeast, rhs),
        Clause::new("c2.log2_I+log2_Kf", format!("fl(log2 {ni}) + fl(log2 {kf})"), l_i + l_kf, Relation::AtLeast, rhs),
        Clause::new("c2.log2_4IhJ", format!("log2(4*{ih}*{nj})"), log2(4.0 * (ih * nj) as f64), Relation::AtLeast, rhs),
    ];
    [c1, c2]
}

fn slab_passes(dims: Dims, ih: usize, kf: usize, rank: usize) -> [bool; 2] {
    slab_clauses(dims, ih, kf, rank).map(|c| c.iter().all(|c| c.holds))
}

/// Sufficient conditions for recovery from sampled horizontal and frontal
/// slabs; satisfied when either condition holds.
pub fn check_slab_conditions(s: &SlabScheme, rank: usize) -> IdentifiabilityReport {
    let groups = slab_clauses(s.dims(), s.num_horizontal(), s.num_frontal(), rank);
    let passes = groups.clone().map(|c| c.iter().all(|c| c.holds));
    let clauses: Vec<Clause> = groups.into_iter().flatten().collect();
    let which_condition = if passes[0] {
        "slab condition 1".to_owned()
    } else if passes[1] {
        "slab condition 2".to_owned()
    } else {
        clauses.iter().find(|c| !c.holds).map(|c| c.label.clone()).unwrap_or_default()
    };
    IdentifiabilityReport { satisfied: passes[0] || passes[1], which_condition, clauses }
}

/// Sufficient conditions (1)–(5) for recovery from two fiber patterns.
pub fn check_fiber_conditions(s: &FiberScheme, rank: usize) -> IdentifiabilityReport {
    let (ni, nj, nk) = s.dims();
    let [p1, p2] = s.patterns();
    let rhs = log2(4.0 * rank as f64);
    let mut clauses = Vec::new();
    for (d, p) in [(1, p1), (2, p2)] {
        clauses.push(Clause::new(format!("c1.rows{d}"), format!("|S_r^{d}|"), p.rows.len() as f64, Relation::AtLeast, 2.0));
        clauses.push(Clause::new(format!("c1.cols{d}"), format!("|S_c^{d}|"), p.cols.len() as f64, Relation::AtLeast, 2.0));
    }
    let row_cover = p1.rows.union(&p2.rows).count();
    let col_cover = p1.cols.union(&p2.cols).count();
    clauses.push(Clause::new("c2.row_cover", "|S_r^1 u S_r^2|", row_cover as f64, Relation::Equal, ni as f64));
    clauses.push(Clause::new("c3.col_cover", "|S_c^1 u S_c^2|", col_cover as f64, Relation::Equal, nj as f64));
    let overlap = intersection(&p1.rows, &p2.rows) + intersection(&p1.cols, &p2.cols);
    clauses.push(Clause::new(
        "c4.overlap",
        "|S_r^1 n S_r^2| + |S_c^1 n S_c^2|",
        overlap as f64,
        Relation::AtLeast,
        1.0,
    ));
    for (d, p) in [(1, p1), (2, p2)] {
        let (lr, lc, lk) = (floor_log2(p.rows.len()), floor_log2(p.cols.len()), floor_log2(nk));
        let terms = [lr + lc, lr + lk, lc + lk];
        let min = terms.iter().cloned().fold(f64::INFINITY, f64::min);
        clauses.push(Clause::new(
            format!("c5.d{d}"),
            format!("min{{{}, {}, {}}}", terms[0], terms[1], terms[2]),
            min,
            Relation::AtLeast,
            rhs,
        ));
    }
    let satisfied = clauses.iter().all(|c| c.holds);
    let which_condition = match clauses.iter().find(|c| !c.holds) {
        None => "fiber conditions 1-5".to_owned(),
        Some(c) => c.label.clone(),
    };
    IdentifiabilityReport { satisfied, which_condition, clauses }
}

fn intersection(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> usize {
    a.intersection(b).count()
}

/// Minimal sampling sizes `(I_h, K_f)` for the slab conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlabRequirements {
    /// Minimal pairs satisfying condition 1 and condition 2 respectively.
    pub per_condition: [Vec<(usize, usize)>; 2],
    /// Minimal pairs satisfying either condition.
    pub pareto: Vec<(usize, usize)>,
}

impl SlabRequirements {
    pub fn contains(&self, ih: usize, kf: usize) -> bool {
        self.pareto.contains(&(ih, kf))
    }

    /// The minimal pair observing the fewest entries of an `I × J × K` tensor.
    pub fn cheapest(&self, dims: Dims) -> (usize, usize) {
        let (ni, nj, nk) = dims;
        *self
            .pareto
            .iter()
            .min_by_key(|&&(ih, kf)| ih * nj * nk + ni * nj * kf - ih * nj * kf)
            .expect("requirements are never empty")
    }
}

/// Exhaustive search over `I_h ∈ 1..=I`, `K_f ∈ 1..=K` for the minimal pairs
/// passing the slab conditions.
pub fn min_slab_requirements(ni: usize, nj: usize, nk: usize, rank: usize) -> Result<SlabRequirements, SamplingError> {
    if rank == 0 {
        return Err(SamplingError::ZeroRank);
    }
    let infeasible = SamplingError::Infeasible { rank, max_ih: ni, max_kf: nk };
    if !generic_identifiability(ni, nj, nk, rank).satisfied {
        return Err(infeasible);
    }
    let dims = (ni, nj, nk);
    let mut grid = vec![[false; 2]; ni * nk];
    for ih in 1..=ni {
        for kf in 1..=nk {
            grid[(ih - 1) * nk + (kf - 1)] = slab_passes(dims, ih, kf, rank);
        }
    }
    let frontier = |pass: &dyn Fn([bool; 2]) -> bool| {
        let mut out = Vec::new();
        let mut best_kf = usize::MAX;
        for ih in 1..=ni {
            if let Some(kf) = (1..=nk).find(|&kf| pass(grid[(ih - 1) * nk + (kf - 1)])) {
                if kf < best_kf {
                    out.push((ih, kf));
                    best_kf = kf;
                }
            }
        }
        out
    };
    let per_condition = [frontier(&|p| p[0]), frontier(&|p| p[1])];
    let pareto = frontier(&|p| p[0] || p[1]);
    if pareto.is_empty() {
        return Err(infeasible);
    }
    Ok(SlabRequirements { per_condition, pareto })
}
