//! Scheme files: named, one-based index lists.
//!
//! ```text
//! scheme slab
//! dims 263 5 72
//! horizontal 1 2 3 17
//! frontal 1 36 72
//! ```
//!
//! A fiber scheme lists `rows1`, `cols1`, `rows2` and `cols2` instead of
//! `horizontal`/`frontal`. `#` starts a comment. Indices are one-based in the
//! file and zero-based in memory.

use std::io::{BufRead, Write};

use crate::sampling::{
    build_fiber_mask, build_slab_mask, check_fiber_conditions, check_slab_conditions, FiberScheme,
    IdentifiabilityReport, SamplingError, SlabScheme,
};
use crate::tensor::{Dims, MaskTensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheme {
    Slab(SlabScheme),
    Fiber(FiberScheme),
}

impl Scheme {
    pub fn dims(&self) -> Dims {
        match self {
            Self::Slab(s) => s.dims(),
            Self::Fiber(s) => s.dims(),
        }
    }

    pub fn mask(&self) -> Result<MaskTensor, SamplingError> {
        match self {
            Self::Slab(s) => build_slab_mask(s),
            Self::Fiber(s) => build_fiber_mask(s),
        }
    }

    pub fn check(&self, rank: usize) -> IdentifiabilityReport {
        match self {
            Self::Slab(s) => check_slab_conditions(s, rank),
            Self::Fiber(s) => check_fiber_conditions(s, rank),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Slab(_) => "slab",
            Self::Fiber(_) => "fiber",
        }
    }
}

const SLAB_KEYS: [&str; 2] = ["horizontal", "frontal"];
const FIBER_KEYS: [&str; 4] = ["rows1", "cols1", "rows2", "cols2"];

pub fn parse_scheme<R: BufRead>(r: R) -> Result<Scheme, SamplingError> {
    let mut kind: Option<(usize, String)> = None;
    let mut dims: Option<Dims> = None;
    // (key, line, zero-based indices)
    let mut lists: Vec<(String, usize, Vec<usize>)> = Vec::new();
    let mut last_line = 0;
    for (n, line) in r.lines().enumerate() {
        let line_no = n + 1;
        last_line = line_no;
        let err = |message: String| SamplingError::Parse { line: line_no, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let text = line.split('#').next().unwrap_or("").trim();
        let mut words = text.split_whitespace();
        let Some(key) = words.next() else { continue };
        let numbers = |words: std::str::SplitWhitespace| -> Result<Vec<usize>, SamplingError> {
            words.map(|w| w.parse::<usize>().map_err(|_| err(format!("`{w}` is not a non-negative integer")))).collect()
        };
        match key {
            "scheme" => {
                let name: Vec<&str> = words.collect();
                match name.as_slice() {
                    [k @ ("slab" | "fiber")] if kind.is_none() => kind = Some((line_no, (*k).to_owned())),
                    [_] if kind.is_some() => return Err(err("`scheme` given twice".into())),
                    _ => return Err(err(format!("expected `scheme slab` or `scheme fiber`, got `{text}`"))),
                }
            }
            "dims" => {
                if dims.is_some() {
                    return Err(err("`dims` given twice".into()));
                }
                match numbers(words)?.as_slice() {
                    &[i, j, k] => dims = Some((i, j, k)),
                    _ => return Err(err("`dims` takes three sizes".into())),
                }
            }
            _ if SLAB_KEYS.contains(&key) || FIBER_KEYS.contains(&key) => {
                if lists.iter().any(|(k, _, _)| k == key) {
                    return Err(err(format!("`{key}` given twice")));
                }
                let one_based = numbers(words)?;
                if one_based.contains(&0) {
                    return Err(err(format!("`{key}` indices are one-based; 0 is not allowed")));
                }
                lists.push((key.to_owned(), line_no, one_based.into_iter().map(|v| v - 1).collect()));
            }
            _ => return Err(err(format!("unknown statement `{key}`"))),
        }
    }
    let missing = |what: &str| SamplingError::Parse { line: last_line, message: format!("missing `{what}`") };
    let (_, kind) = kind.ok_or_else(|| missing("scheme"))?;
    let dims = dims.ok_or_else(|| missing("dims"))?;
    let allowed: &[&str] = if kind == "slab" { &SLAB_KEYS } else { &FIBER_KEYS };
    if let Some((key, line, _)) = lists.iter().find(|(k, _, _)| !allowed.contains(&k.as_str())) {
        return Err(SamplingError::Parse { line: *line, message: format!("`{key}` does not belong to a {kind} scheme") });
    }
    let mut take = |key: &str| -> Result<(usize, Vec<usize>), SamplingError> {
        let pos = lists.iter().position(|(k, _, _)| k == key).ok_or_else(|| missing(key))?;
        let (_, line, v) = lists.swap_remove(pos);
        Ok((line, v))
    };
    // Range errors point at the list that carried the bad index.
    let at = |line: usize| move |e: SamplingError| SamplingError::Parse { line, message: one_based_message(e) };
    if kind == "slab" {
        let (lh, h) = take("horizontal")?;
        let (lf, f) = take("frontal")?;
        SlabScheme::new(dims, h.clone(), Vec::new()).map_err(at(lh))?;
        SlabScheme::new(dims, Vec::new(), f.clone()).map_err(at(lf))?;
        Ok(Scheme::Slab(SlabScheme::new(dims, h, f)?))
    } else {
        let mut parts: [(Vec<usize>, Vec<usize>); 2] = Default::default();
        for (d, part) in parts.iter_mut().enumerate() {
            let (lr, rows) = take(FIBER_KEYS[2 * d])?;
            let (lc, cols) = take(FIBER_KEYS[2 * d + 1])?;
            FiberScheme::new(dims, [(rows.clone(), Vec::new()), Default::default()]).map_err(at(lr))?;
            FiberScheme::new(dims, [(Vec::new(), cols.clone()), Default::default()]).map_err(at(lc))?;
            *part = (rows, cols);
        }
        Ok(Scheme::Fiber(FiberScheme::new(dims, parts)?))
    }
}

fn one_based_message(e: SamplingError) -> String {
    match e {
        SamplingError::IndexOutOfRange { axis, index, size } => {
            format!("{axis} index {} out of range 1..={size}", index + 1)
        }
        other => other.to_string(),
    }
}

pub fn write_scheme<W: Write>(s: &Scheme, mut w: W) -> std::io::Result<()> {
    let (i, j, k) = s.dims();
    writeln!(w, "scheme {}", s.kind())?;
    writeln!(w, "dims {i} {j} {k}")?;
    let mut list = |key: &str, set: &std::collections::BTreeSet<usize>| -> std::io::Result<()> {
        write!(w, "{key}")?;
        for v in set {
            write!(w, " {}", v + 1)?;
        }
        writeln!(w)
    };
    match s {
        Scheme::Slab(s) => {
            list("horizontal", s.horizontal())?;
            list("frontal", s.frontal())?;
        }
        Scheme::Fiber(s) => {
            for (d, p) in s.patterns().iter().enumerate() {
                list(FIBER_KEYS[2 * d], &p.rows)?;
                list(FIBER_KEYS[2 * d + 1], &p.cols)?;
            }
        }
    }
    Ok(())
}
