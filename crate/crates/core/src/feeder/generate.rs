//! Seeded radial feeder generator and the two bundled feeders.
//!
//! The generator grows a three-phase trunk from the slack, hangs two- and
//! single-phase laterals off it, places loads (a share of trunk buses stay
//! unloaded junctions), and finally scales every line impedance so that the
//! lowest voltage at the heaviest profile loading without solar is
//! `target_min_voltage`.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::feeder::powerflow::Network;
use crate::feeder::profiles::MAX_LOAD_MULTIPLIER;
use crate::feeder::{parse_feeder, Bus, FeederError, FeederModel, Line, LoadSpec};

const DEFAULT_FEEDER: &str = include_str!("../../data/default_feeder.txt");
const TINY_FEEDER: &str = include_str!("../../data/tiny_feeder.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub name: String,
    pub seed: u64,
    /// Three-phase buses besides the slack.
    pub three_phase: usize,
    pub two_phase: usize,
    pub single_phase: usize,
    pub base_kva: f64,
    /// Probability that a three-phase trunk bus carries no load at all.
    pub junction_share: f64,
    pub target_min_voltage: f64,
}

impl Default for GeneratorParams {
    /// The parameters behind the bundled default feeder: 50 buses, 118 phases.
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 2024,
            three_phase: 27,
            two_phase: 12,
            single_phase: 10,
            base_kva: 1000.0,
            junction_share: 0.4,
            target_min_voltage: 0.90,
        }
    }
}

/// The checked-in ~50-bus feeder (`data/default_feeder.txt`).
pub fn default_feeder() -> FeederModel {
    parse_feeder(DEFAULT_FEEDER.as_bytes()).expect("bundled feeder parses")
}

/// The checked-in 8-phase feeder (`data/tiny_feeder.txt`).
pub fn tiny_feeder() -> FeederModel {
    parse_feeder(TINY_FEEDER.as_bytes()).expect("bundled feeder parses")
}

/// Rounds to six decimals so the written model reads back to the same value.
fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

pub fn generate_feeder(params: &GeneratorParams) -> Result<FeederModel, FeederError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut buses = vec![Bus { name: "source".into(), phases: [true; 3] }];
    // (from, to, length in arbitrary units)
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();

    for n in 1..=params.three_phase {
        // Mostly extend the recent end of the trunk, sometimes branch earlier.
        let back = rng.random_range(1..=3usize).min(n);
        let parent = n - back;
        buses.push(Bus { name: format!("t{n}"), phases: [true; 3] });
        edges.push((parent, n, rng.random_range(0.6..1.4)));
    }
    let trunk: Vec<usize> = (1..=params.three_phase).collect();
    let pairs = [[true, true, false], [false, true, true], [true, false, true]];
    for n in 0..params.two_phase {
        let parent = *trunk.choose(&mut rng).ok_or_else(|| FeederError::Invalid("laterals need a trunk".into()))?;
        let phases = *pairs.choose(&mut rng).expect("nonempty");
        buses.push(Bus { name: format!("d{}", n + 1), phases });
        edges.push((parent, buses.len() - 1, rng.random_range(0.8..1.6)));
    }
    for n in 0..params.single_phase {
        let parent = rng.random_range(1..buses.len());
        let options: Vec<usize> = (0..3).filter(|&p| buses[parent].phases[p]).collect();
        let phase = *options.choose(&mut rng).expect("bus has phases");
        let mut phases = [false; 3];
        phases[phase] = true;
        buses.push(Bus { name: format!("s{}", n + 1), phases });
        edges.push((parent, buses.len() - 1, rng.random_range(0.8..2.0)));
    }

    let mut loads = Vec::new();
    for (bus, b) in buses.iter().enumerate().skip(1) {
        let junction = b.phases == [true; 3] && rng.random_bool(params.junction_share);
        for phase in (0..3).filter(|&p| b.phases[p]) {
            let p_kw: f64 = rng.random_range(10.0..40.0);
            let pf: f64 = rng.random_range(0.88..0.97);
            let has_solar = rng.random_bool(0.3);
            let solar_share: f64 = rng.random_range(0.05..0.15);
            if junction {
                continue;
            }
            let q_kvar = p_kw * (1.0 - pf * pf).sqrt() / pf;
            let solar_kw = if has_solar { solar_share * p_kw } else { 0.0 };
            loads.push(LoadSpec { bus, phase, p_kw: round6(p_kw), q_kvar: round6(q_kvar), solar_kw: round6(solar_kw) });
        }
    }

    let build = |scale: f64| {
        let lines = edges
            .iter()
            .map(|&(from, to, len)| Line { from, to, r: round6(scale * len), x: round6(2.0 * scale * len) })
            .collect();
        FeederModel::new(params.name.clone(), params.base_kva, buses.clone(), lines, loads.clone())
    };
    let min_voltage = |f: &FeederModel| -> Option<f64> {
        let demand: Vec<_> = f
            .phases()
            .iter()
            .map(|&ph| match f.load_at(ph) {
                Some(l) => num_complex::Complex64::new(l.p_kw, l.q_kvar) * (MAX_LOAD_MULTIPLIER / f.base_kva()),
                None => num_complex::Complex64::new(0.0, 0.0),
            })
            .collect();
        let sol = Network::new(f).solve(&demand).ok()?;
        Some(sol.voltages.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min))
    };
    // Voltage drop grows with impedance; bisect the common scale factor.
    let (mut lo, mut hi): (f64, f64) = (1e-5, 1.0);
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        match min_voltage(&build(mid)?) {
            Some(v) if v > params.target_min_voltage => lo = mid,
            _ => hi = mid,
        }
    }
    build(round6(lo).max(1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::write_feeder;

    #[test]
    fn bundled_default_matches_generator() {
        let generated = generate_feeder(&GeneratorParams::default()).unwrap();
        let mut text = Vec::new();
        write_feeder(&generated, &mut text).unwrap();
        assert_eq!(String::from_utf8(text).unwrap(), DEFAULT_FEEDER);
        let f = default_feeder();
        assert_eq!(f, generated);
        assert_eq!(f.buses().len(), 50);
        assert_eq!(f.phases().len(), 118);
    }

    #[test]
    fn tiny_feeder_has_eight_phases() {
        assert_eq!(tiny_feeder().phases().len(), 8);
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let p = GeneratorParams { three_phase: 4, two_phase: 2, single_phase: 2, ..Default::default() };
        assert_eq!(generate_feeder(&p).unwrap(), generate_feeder(&p).unwrap());
        let other = generate_feeder(&GeneratorParams { seed: 1, ..p.clone() }).unwrap();
        assert_ne!(other, generate_feeder(&p).unwrap());
    }
}
