//! Radial feeder description and its line-based text format.
//!
//! ```text
//! # comments and blank lines are ignored
//! feeder <name>
//! base_kva <per-phase power base>
//! bus <name> <phases>              phases: any of `a`, `b`, `c`, e.g. `abc`, `ac`
//! line <from> <to> <r_pu> <x_pu>   series impedance, identical on every phase
//! load <bus> <phase> <p_kw> <q_kvar> <solar_kw>
//! ```
//!
//! The first bus is the slack and must carry all three phases. Every other
//! bus is fed by exactly one line, and a line may only carry phases present
//! at its sending end. Peak load and solar ratings are per phase.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::feeder::FeederError;

pub const PHASE_NAMES: [char; 3] = ['a', 'b', 'c'];

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub name: String,
    pub phases: [bool; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// Peak ratings of the load and solar unit on one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    pub bus: usize,
    pub phase: usize,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub solar_kw: f64,
}

/// One phase of one bus, the unit indexed by the tensor's first mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseRef {
    pub bus: usize,
    pub phase: usize,
}

/// Validated radial feeder. Bus 0 is the slack.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    name: String,
    base_kva: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    loads: Vec<LoadSpec>,
    parent_line: Vec<Option<usize>>,
}

impl FeederModel {
    pub fn new(
        name: impl Into<String>,
        base_kva: f64,
        buses: Vec<Bus>,
        lines: Vec<Line>,
        loads: Vec<LoadSpec>,
    ) -> Result<Self, FeederError> {
        let name = name.into();
        let invalid = |m: String| Err(FeederError::Invalid(m));
        if !(base_kva > 0.0 && base_kva.is_finite()) {
            return invalid(format!("base_kva must be positive, got {base_kva}"));
        }
        match buses.first() {
            None => return invalid("feeder has no buses".into()),
            Some(b) if b.phases != [true; 3] => return invalid(format!("slack bus `{}` must carry phases abc", b.name)),
            _ => {}
        }
        let mut names = HashMap::new();
        for (n, b) in buses.iter().enumerate() {
            if !b.phases.iter().any(|&p| p) {
                return invalid(format!("bus `{}` has no phases", b.name));
            }
            if names.insert(b.name.as_str(), n).is_some() {
                return invalid(format!("duplicate bus `{}`", b.name));
            }
        }
        let mut parent_line = vec![None; buses.len()];
        for (l, line) in lines.iter().enumerate() {
            let (Some(from), Some(to)) = (buses.get(line.from), buses.get(line.to)) else {
                return invalid(format!("line {l} refers to a missing bus"));
            };
            if line.to == 0 {
                return invalid(format!("line {l} feeds the slack bus"));
            }
            if parent_line[line.to].replace(l).is_some() {
                return invalid(format!("bus `{}` is fed by more than one line", to.name));
            }
            if (0..3).any(|p| to.phases[p] && !from.phases[p]) {
                return invalid(format!("line `{}`-`{}` carries a phase missing at `{}`", from.name, to.name, from.name));
            }
            if !(line.r >= 0.0 && line.x >= 0.0 && line.r + line.x > 0.0 && (line.r + line.x).is_finite()) {
                return invalid(format!("line `{}`-`{}` needs a nonzero, nonnegative impedance", from.name, to.name));
            }
        }
        for (n, b) in buses.iter().enumerate().skip(1) {
            if parent_line[n].is_none() {
                return invalid(format!("bus `{}` is not connected", b.name));
            }
        }
        // With one feeding line per bus the graph is a tree iff every bus
        // reaches the slack by following those lines.
        for start in 1..buses.len() {
            let mut at = start;
            let mut hops = 0;
            while at != 0 {
                at = lines[parent_line[at].expect("checked above")].from;
                hops += 1;
                if hops > buses.len() {
                    return invalid(format!("bus `{}` lies on a cycle", buses[start].name));
                }
            }
        }
        let mut seen = HashMap::new();
        for ld in &loads {
            let Some(bus) = buses.get(ld.bus) else {
                return invalid("load on a missing bus".into());
            };
            if ld.phase > 2 || !bus.phases[ld.phase] {
                return invalid(format!("load on missing phase of bus `{}`", bus.name));
            }
            if seen.insert((ld.bus, ld.phase), ()).is_some() {
                return invalid(format!("two loads on `{}.{}`", bus.name, PHASE_NAMES[ld.phase]));
            }
            if ld.bus == 0 {
                return invalid("the slack bus cannot carry a load".into());
            }
            if !(ld.p_kw >= 0.0 && ld.solar_kw >= 0.0 && ld.q_kvar.is_finite() && ld.p_kw.is_finite() && ld.solar_kw.is_finite())
            {
                return invalid(format!("bad ratings on `{}.{}`", bus.name, PHASE_NAMES[ld.phase]));
            }
        }
        Ok(Self { name, base_kva, buses, lines, loads, parent_line })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_kva(&self) -> f64 {
        self.base_kva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn loads(&self) -> &[LoadSpec] {
        &self.loads
    }

    /// The line feeding `bus`; `None` for the slack.
    pub fn parent_line(&self, bus: usize) -> Option<&Line> {
        self.parent_line[bus].map(|l| &self.lines[l])
    }

    /// All phases in tensor order: buses in file order, phases `a, b, c`
    /// within a bus. The slack phases come first.
    pub fn phases(&self) -> Vec<PhaseRef> {
        self.buses
            .iter()
            .enumerate()
            .flat_map(|(bus, b)| (0..3).filter(move |&p| b.phases[p]).map(move |phase| PhaseRef { bus, phase }))
            .collect()
    }

    pub fn phase_label(&self, p: PhaseRef) -> String {
        format!("{}.{}", self.buses[p.bus].name, PHASE_NAMES[p.phase])
    }

    /// The load attached to a phase, if any.
    pub fn load_at(&self, p: PhaseRef) -> Option<&LoadSpec> {
        self.loads.iter().find(|l| l.bus == p.bus && l.phase == p.phase)
    }

    /// A phase that is not the slack and has neither load nor solar.
    pub fn is_zero_injection(&self, p: PhaseRef) -> bool {
        p.bus != 0 && self.load_at(p).is_none_or(|l| l.p_kw == 0.0 && l.q_kvar == 0.0 && l.solar_kw == 0.0)
    }

    /// Buses ordered so that every bus follows its feeding bus.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut children = vec![Vec::new(); self.buses.len()];
        for line in &self.lines {
            children[line.from].push(line.to);
        }
        let mut order = vec![0];
        let mut head = 0;
        while head < order.len() {
            let at = order[head];
            order.extend_from_slice(&children[at]);
            head += 1;
        }
        order
    }
}

pub fn parse_feeder<R: BufRead>(r: R) -> Result<FeederModel, FeederError> {
    let mut name = None;
    let mut base_kva = None;
    let mut buses: Vec<Bus> = Vec::new();
    let mut bus_ids: HashMap<String, usize> = HashMap::new();
    let mut lines = Vec::new();
    let mut loads = Vec::new();
    // Line number of each statement, used to anchor validation errors.
    let mut bus_at = Vec::new();
    let mut line_at = Vec::new();
    let mut load_at = Vec::new();

    for (n, text) in r.lines().enumerate() {
        let lineno = n + 1;
        let text = text.map_err(|e| FeederError::Io(e.to_string()))?;
        let err = |message: String| FeederError::Parse { line: lineno, message };
        let body = text.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        let bus_ref = |s: &str| bus_ids.get(s).copied().ok_or_else(|| err(format!("unknown bus `{s}`")));
        match (toks[0], toks.len()) {
            ("feeder", 2) => name = Some(toks[1].to_owned()),
            ("base_kva", 2) => base_kva = Some(num(toks[1])?),
            ("bus", 3) => {
                let mut phases = [false; 3];
                for ch in toks[2].chars() {
                    let p = PHASE_NAMES.iter().position(|&c| c == ch).ok_or_else(|| err(format!("bad phase `{ch}`")))?;
                    if std::mem::replace(&mut phases[p], true) {
                        return Err(err(format!("phase `{ch}` repeated")));
                    }
                }
                if bus_ids.insert(toks[1].to_owned(), buses.len()).is_some() {
                    return Err(err(format!("duplicate bus `{}`", toks[1])));
                }
                buses.push(Bus { name: toks[1].to_owned(), phases });
                bus_at.push(lineno);
            }
            ("line", 5) => {
                lines.push(Line { from: bus_ref(toks[1])?, to: bus_ref(toks[2])?, r: num(toks[3])?, x: num(toks[4])? });
                line_at.push(lineno);
            }
            ("load", 6) => {
                let mut ph = toks[2].chars();
                let phase = match (ph.next(), ph.next()) {
                    (Some(c), None) => PHASE_NAMES.iter().position(|&p| p == c),
                    _ => None,
                }
                .ok_or_else(|| err(format!("bad phase `{}`", toks[2])))?;
                loads.push(LoadSpec {
                    bus: bus_ref(toks[1])?,
                    phase,
                    p_kw: num(toks[3])?,
                    q_kvar: num(toks[4])?,
                    solar_kw: num(toks[5])?,
                });
                load_at.push(lineno);
            }
            ("feeder" | "base_kva" | "bus" | "line" | "load", k) => {
                return Err(err(format!("`{}` statement has {} fields", toks[0], k - 1)));
            }
            (other, _) => return Err(err(format!("unknown statement `{other}`"))),
        }
    }

    let name = name.ok_or(FeederError::Parse { line: 0, message: "missing `feeder` statement".into() })?;
    let base_kva = base_kva.ok_or(FeederError::Parse { line: 0, message: "missing `base_kva` statement".into() })?;
    // Structural problems are re-checked statement by statement so the error
    // can point at a line.
    if let Some(first) = buses.first() {
        if first.phases != [true; 3] {
            return Err(FeederError::Parse { line: bus_at[0], message: "the slack bus must carry phases abc".into() });
        }
    }
    let mut fed = vec![false; buses.len()];
    for (l, line) in lines.iter().enumerate() {
        let anchored = |message: String| FeederError::Parse { line: line_at[l], message };
        if line.to == 0 {
            return Err(anchored("line feeds the slack bus".into()));
        }
        if std::mem::replace(&mut fed[line.to], true) {
            return Err(anchored(format!("bus `{}` is fed twice", buses[line.to].name)));
        }
        if (0..3).any(|p| buses[line.to].phases[p] && !buses[line.from].phases[p]) {
            return Err(anchored("line carries a phase missing at its sending bus".into()));
        }
    }
    for (n, ld) in loads.iter().enumerate() {
        if !buses[ld.bus].phases[ld.phase] {
            return Err(FeederError::Parse { line: load_at[n], message: "load on a phase the bus does not carry".into() });
        }
    }
    if let Some(n) = (1..buses.len()).find(|&n| !fed[n]) {
        return Err(FeederError::Parse { line: bus_at[n], message: format!("bus `{}` is not connected", buses[n].name) });
    }
    FeederModel::new(name, base_kva, buses, lines, loads)
}

pub fn write_feeder<W: Write>(f: &FeederModel, mut w: W) -> Result<(), FeederError> {
    let mut s = String::new();
    let _ = writeln!(s, "feeder {}", f.name);
    let _ = writeln!(s, "base_kva {}", f.base_kva);
    for b in &f.buses {
        let phases: String = (0..3).filter(|&p| b.phases[p]).map(|p| PHASE_NAMES[p]).collect();
        let _ = writeln!(s, "bus {} {}", b.name, phases);
    }
    for l in &f.lines {
        let _ = writeln!(s, "line {} {} {} {}", f.buses[l.from].name, f.buses[l.to].name, l.r, l.x);
    }
    for ld in &f.loads {
        let _ = writeln!(
            s,
            "load {} {} {} {} {}",
            f.buses[ld.bus].name, PHASE_NAMES[ld.phase], ld.p_kw, ld.q_kvar, ld.solar_kw
        );
    }
    w.write_all(s.as_bytes()).map_err(|e| FeederError::Io(e.to_string()))
}
