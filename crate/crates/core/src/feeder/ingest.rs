//! CSV exchange of state series.
//!
//! One row per `(timestamp, phase)`; the header is mandatory and declares
//! units in brackets:
//!
//! ```text
//! timestamp[min],phase,re_v[pu],im_v[pu],vmag[pu],p[kW],q[kVAr]
//! 660,source.a,1,0,1,1234.5,310.2
//! ```
//!
//! Measurement columns may appear in any order and any subset. An empty cell,
//! an absent column, or an absent `(timestamp, phase)` row leaves the entry
//! unobserved in the returned mask.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::feeder::{FeederError, StateTensorMeta, MEASUREMENTS, UNITS};
use crate::tensor::{MaskTensor, Tensor3};

fn split_unit(cell: &str) -> (&str, Option<&str>) {
    let cell = cell.trim();
    match cell.strip_suffix(']').and_then(|c| c.split_once('[')) {
        Some((name, unit)) => (name.trim(), Some(unit.trim())),
        None => (cell, None),
    }
}

/// Reads a CSV table into a tensor plus the mask of entries it supplied.
pub fn build_state_tensor<R: Read>(r: R, meta: &StateTensorMeta) -> Result<(Tensor3<f64>, MaskTensor), FeederError> {
    meta.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let csv_err = |line: usize, e: csv::Error| FeederError::Parse { line, message: e.to_string() };
    let header = reader.headers().map_err(|e| csv_err(1, e))?.clone();

    let (mut ts_col, mut phase_col) = (None, None);
    let mut columns: Vec<(usize, usize)> = Vec::new();
    for (c, cell) in header.iter().enumerate() {
        let (name, unit) = split_unit(cell);
        let expect_unit = |expected: &str| match unit {
            Some(u) if u == expected => Ok(()),
            found => Err(FeederError::UnitMismatch {
                column: name.to_owned(),
                expected: expected.to_owned(),
                found: found.unwrap_or("no unit").to_owned(),
            }),
        };
        let slot = match name {
            "timestamp" => {
                expect_unit("min")?;
                &mut ts_col
            }
            "phase" => {
                if unit.is_some() {
                    return Err(FeederError::Parse { line: 1, message: "`phase` takes no unit".into() });
                }
                &mut phase_col
            }
            _ => {
                let j = MEASUREMENTS
                    .iter()
                    .position(|m| *m == name)
                    .ok_or_else(|| FeederError::Parse { line: 1, message: format!("unknown column `{name}`") })?;
                expect_unit(UNITS[j])?;
                if columns.iter().any(|&(_, jj)| jj == j) {
                    return Err(FeederError::Parse { line: 1, message: format!("column `{name}` repeated") });
                }
                columns.push((c, j));
                continue;
            }
        };
        if slot.replace(c).is_some() {
            return Err(FeederError::Parse { line: 1, message: format!("column `{name}` repeated") });
        }
    }
    let missing = |what: &str| FeederError::Parse { line: 1, message: format!("missing `{what}` column") };
    let ts_col = ts_col.ok_or_else(|| missing("timestamp"))?;
    let phase_col = phase_col.ok_or_else(|| missing("phase"))?;

    let phase_index: HashMap<&str, usize> = meta.phase_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let time_index: HashMap<u32, usize> = meta.timestamps.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let mut x = Tensor3::zeros(meta.dims())?;
    let mut mask = MaskTensor::empty(meta.dims())?;
    let mut seen = vec![false; meta.phase_labels.len() * meta.timestamps.len()];

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_err(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| FeederError::Parse { line, message };
        let ts_text = record.get(ts_col).unwrap_or("").trim();
        let ts: u32 = ts_text.parse().map_err(|_| err(format!("bad timestamp `{ts_text}`")))?;
        let phase = record.get(phase_col).unwrap_or("").trim();
        let k = *time_index.get(&ts).ok_or_else(|| err(format!("timestamp {ts} is not on the time axis")))?;
        let i = *phase_index.get(phase).ok_or_else(|| err(format!("unknown phase `{phase}`")))?;
        if std::mem::replace(&mut seen[i + meta.phase_labels.len() * k], true) {
            return Err(FeederError::Duplicate { line, phase: phase.to_owned(), timestamp: ts });
        }
        for &(c, j) in &columns {
            let cell = record.get(c).unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| err(format!("bad value `{cell}` in `{}`", MEASUREMENTS[j])))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value in `{}`", MEASUREMENTS[j])));
            }
            x.set(i, j, k, v);
            mask.set(i, j, k, true);
        }
    }
    Ok((x, mask))
}

/// Writes the tensor as CSV, time-major, leaving cells outside `mask` empty.
pub fn write_state_csv<W: Write>(
    x: &Tensor3<f64>,
    meta: &StateTensorMeta,
    mask: Option<&MaskTensor>,
    w: W,
) -> Result<(), FeederError> {
    if x.dims() != meta.dims() {
        return Err(FeederError::Meta(format!("tensor is {:?}, metadata describes {:?}", x.dims(), meta.dims())));
    }
    let io = |e: csv::Error| FeederError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp[min]".to_owned(), "phase".to_owned()];
    header.extend(MEASUREMENTS.iter().zip(UNITS).map(|(m, u)| format!("{m}[{u}]")));
    out.write_record(&header).map_err(io)?;
    for (k, ts) in meta.timestamps.iter().enumerate() {
        for (i, label) in meta.phase_labels.iter().enumerate() {
            let mut row = vec![ts.to_string(), label.clone()];
            for j in 0..MEASUREMENTS.len() {
                let observed = mask.is_none_or(|m| m.get(i, j, k));
                row.push(if observed { x.get(i, j, k).to_string() } else { String::new() });
            }
            out.write_record(&row).map_err(io)?;
        }
    }
    out.flush().map_err(|e| FeederError::Io(e.to_string()))
}
