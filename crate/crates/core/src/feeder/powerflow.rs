//! Backward/forward sweep power flow, one phase at a time.
//!
//! Each phase is solved on its own radial network (mutual coupling between
//! phases is neglected). The slack voltage is `1∠0°`, `1∠−120°`, `1∠120°`
//! for phases `a`, `b`, `c`. Loads are constant-power.

use num_complex::Complex64;

use crate::feeder::{FeederError, FeederModel};

/// Largest complex power mismatch (per unit) accepted at any node.
pub const MISMATCH_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;
/// Below this magnitude a node voltage is taken as collapsed.
const COLLAPSE: f64 = 0.3;

pub fn slack_voltage(phase: usize) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0 * phase as f64)
}

/// One phase's radial network in topological order; position 0 is the slack.
#[derive(Debug, Clone)]
struct PhaseTree {
    phase: usize,
    /// Tensor phase index of each node.
    nodes: Vec<usize>,
    parent: Vec<usize>,
    z: Vec<Complex64>,
}

/// Precomputed per-phase networks of a feeder.
#[derive(Debug, Clone)]
pub struct Network {
    trees: Vec<PhaseTree>,
    phase_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Per phase, in tensor order.
    pub voltages: Vec<Complex64>,
    /// Complex power injected into the network at each phase, per unit.
    /// Equals minus the demand except at the slack, where it is the supply.
    pub injections: Vec<Complex64>,
    pub max_mismatch: f64,
    pub iterations: usize,
}

impl Network {
    pub fn new(feeder: &FeederModel) -> Self {
        let phases = feeder.phases();
        let mut index = vec![[usize::MAX; 3]; feeder.buses().len()];
        for (n, p) in phases.iter().enumerate() {
            index[p.bus][p.phase] = n;
        }
        let order = feeder.topological_order();
        let trees = (0..3)
            .map(|phase| {
                let buses: Vec<usize> = order.iter().copied().filter(|&b| feeder.buses()[b].phases[phase]).collect();
                let mut position = vec![usize::MAX; feeder.buses().len()];
                for (pos, &b) in buses.iter().enumerate() {
                    position[b] = pos;
                }
                let mut parent = vec![0; buses.len()];
                let mut z = vec![Complex64::new(0.0, 0.0); buses.len()];
                for (pos, &b) in buses.iter().enumerate().skip(1) {
                    let line = feeder.parent_line(b).expect("non-slack bus has a feeding line");
                    parent[pos] = position[line.from];
                    z[pos] = Complex64::new(line.r, line.x);
                }
                PhaseTree { phase, nodes: buses.iter().map(|&b| index[b][phase]).collect(), parent, z }
            })
            .collect();
        Self { trees, phase_count: phases.len() }
    }

    /// Solves for the given per-unit demands (consumption, per phase in tensor
    /// order; slack entries are ignored).
    pub fn solve(&self, demand: &[Complex64]) -> Result<PowerFlowSolution, FeederError> {
        if demand.len() != self.phase_count {
            return Err(FeederError::Profile(format!("{} demands for {} phases", demand.len(), self.phase_count)));
        }
        let mut voltages = vec![Complex64::new(0.0, 0.0); self.phase_count];
        let mut injections = vec![Complex64::new(0.0, 0.0); self.phase_count];
        let mut max_mismatch: f64 = 0.0;
        let mut iterations = 0;
        for tree in &self.trees {
            let s: Vec<Complex64> = tree.nodes.iter().map(|&n| demand[n]).collect();
            let (v, supply, mismatch, iters) = tree.solve(&s)?;
            for (pos, &n) in tree.nodes.iter().enumerate() {
                voltages[n] = v[pos];
                injections[n] = if pos == 0 { supply } else { -s[pos] };
            }
            max_mismatch = max_mismatch.max(mismatch);
            iterations = iterations.max(iters);
        }
        Ok(PowerFlowSolution { voltages, injections, max_mismatch, iterations })
    }
}

impl PhaseTree {
    /// Returns node voltages, slack supply, final mismatch and iteration count.
    fn solve(&self, s: &[Complex64]) -> Result<(Vec<Complex64>, Complex64, f64, usize), FeederError> {
        let n = self.nodes.len();
        let v0 = slack_voltage(self.phase);
        let mut v = vec![v0; n];
        let mut j = vec![Complex64::new(0.0, 0.0); n];
        for iter in 1..=MAX_ITERATIONS {
            j.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for pos in (1..n).rev() {
                j[pos] += (s[pos] / v[pos]).conj();
                let up = j[pos];
                j[self.parent[pos]] += up;
            }
            for pos in 1..n {
                v[pos] = v[self.parent[pos]] - self.z[pos] * j[pos];
            }
            if let Some(pos) = (1..n).find(|&p| !(v[p].norm() >= COLLAPSE)) {
                return Err(FeederError::Infeasible { step: None, phase: self.nodes[pos] });
            }
            let (mismatch, supply) = self.mismatch(&v, s);
            if mismatch <= MISMATCH_TOL {
                return Ok((v, supply, mismatch, iter));
            }
        }
        let (mismatch, _) = self.mismatch(&v, s);
        Err(FeederError::NonConvergent { step: None, mismatch })
    }

    /// Largest `|V·conj(I) − S|` over non-slack nodes, with branch currents
    /// taken from the voltage drops, plus the slack supply.
    fn mismatch(&self, v: &[Complex64], s: &[Complex64]) -> (f64, Complex64) {
        let n = v.len();
        let mut branch = vec![Complex64::new(0.0, 0.0); n];
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for pos in 1..n {
            branch[pos] = (v[self.parent[pos]] - v[pos]) / self.z[pos];
            out[self.parent[pos]] += branch[pos];
        }
        let worst = (1..n).map(|pos| (v[pos] * (branch[pos] - out[pos]).conj() - s[pos]).norm()).fold(0.0, f64::max);
        (worst, v[0] * out[0].conj())
    }
}
