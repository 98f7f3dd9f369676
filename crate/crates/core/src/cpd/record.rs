//! Text record for [`FitResult`].
//!
//! ```text
//! tensorse-fit 1
//! rank 3
//! converged true
//! sweeps_used 41
//! restart_index 2
//! restart_objectives 5 <v> <v> <v> <v> <v>
//! objective_trace 42 <v> ...
//! undetermined 1 0
//! undetermined 2 0
//! undetermined 3 2 7 9
//! factor A
//! <I F 1 tensor text block>
//! factor B
//! <J F 1 tensor text block>
//! factor C
//! <K F 1 tensor text block>
//! ```
//!
//! Each factor block is the tensor text format of an `rows × F × 1` tensor,
//! i.e. the matrix listed column by column.

use std::io::{BufRead, Write};

use crate::cpd::{CpdFactors, FitError, FitResult};
use crate::scalar::Scalar;
use crate::tensor::{write_text, Matrix, Tensor3, TensorError};

const MAGIC: &str = "tensorse-fit 1";

pub fn write_fit_record<T: Scalar, W: Write>(fit: &FitResult<T>, mut w: W) -> Result<(), TensorError> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "rank {}", fit.factors.rank())?;
    writeln!(w, "converged {}", fit.converged)?;
    writeln!(w, "sweeps_used {}", fit.sweeps_used)?;
    writeln!(w, "restart_index {}", fit.restart_index)?;
    writeln!(w, "restart_objectives {}", join(&fit.restart_objectives))?;
    writeln!(w, "objective_trace {}", join(&fit.objective_trace))?;
    for (m, rows) in fit.undetermined.iter().enumerate() {
        writeln!(w, "undetermined {} {}", m + 1, join(rows))?;
    }
    for (name, m) in [("A", fit.factors.a()), ("B", fit.factors.b()), ("C", fit.factors.c())] {
        writeln!(w, "factor {name}")?;
        let t = Tensor3::from_fn((m.rows(), m.cols(), 1), |r, c, _| m[(r, c)])?;
        write_text(&t, &mut w)?;
    }
    Ok(())
}

fn join<V: std::fmt::Display>(values: &[V]) -> String {
    let mut s = values.len().to_string();
    for v in values {
        s.push(' ');
        s.push_str(&v.to_string());
    }
    s
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String, TensorError> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(self.err("unexpected end of record")),
        }
    }

    fn err(&self, message: impl Into<String>) -> TensorError {
        TensorError::Parse { line: self.number, message: message.into() }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>, TensorError> {
        let line = self.next()?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(toks.map(str::to_owned).collect())
    }

    fn parse<V: std::str::FromStr>(&self, tok: &str) -> Result<V, TensorError> {
        tok.parse().map_err(|_| self.err(format!("bad value `{tok}`")))
    }

    fn single<V: std::str::FromStr>(&mut self, key: &str) -> Result<V, TensorError> {
        let toks = self.keyed(key)?;
        match toks.as_slice() {
            [one] => self.parse(one),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn counted<V: std::str::FromStr>(&self, toks: &[String]) -> Result<Vec<V>, TensorError> {
        let (n, rest) = toks.split_first().ok_or_else(|| self.err("missing count"))?;
        let n: usize = self.parse(n)?;
        if rest.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", rest.len())));
        }
        rest.iter().map(|t| self.parse(t)).collect()
    }

    fn factor<T: Scalar>(&mut self, name: &str) -> Result<Matrix<T>, TensorError> {
        let toks = self.keyed("factor")?;
        if toks != [name] {
            return Err(self.err(format!("expected `factor {name}`")));
        }
        let header = self.next()?;
        let dims: Vec<usize> = header.split_whitespace().map(|t| self.parse(t)).collect::<Result<_, _>>()?;
        let [rows, cols, 1] = dims[..] else {
            return Err(self.err("factor header must be `rows F 1`"));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let line = self.next()?;
            data.push(self.parse::<T>(line.trim())?);
        }
        Ok(Matrix::from_fn(rows, cols, |r, c| data[r + rows * c]))
    }
}

pub fn read_fit_record<T: Scalar, R: BufRead>(r: R) -> Result<FitResult<T>, FitError> {
    let mut lines = Lines { inner: r.lines(), number: 0 };
    if lines.next()?.trim() != MAGIC {
        return Err(lines.err(format!("expected `{MAGIC}`")).into());
    }
    let rank: usize = lines.single("rank")?;
    let converged: bool = lines.single("converged")?;
    let sweeps_used: usize = lines.single("sweeps_used")?;
    let restart_index: usize = lines.single("restart_index")?;
    let toks = lines.keyed("restart_objectives")?;
    let restart_objectives = lines.counted(&toks)?;
    let toks = lines.keyed("objective_trace")?;
    let objective_trace: Vec<T> = lines.counted(&toks)?;
    let mut undetermined: [Vec<usize>; 3] = Default::default();
    for (m, slot) in undetermined.iter_mut().enumerate() {
        let toks = lines.keyed("undetermined")?;
        if toks.first().map(String::as_str) != Some(&(m + 1).to_string()) {
            return Err(lines.err(format!("expected `undetermined {}`", m + 1)).into());
        }
        *slot = lines.counted(&toks[1..])?;
    }
    let a = lines.factor("A")?;
    let b = lines.factor("B")?;
    let c = lines.factor("C")?;
    let factors = CpdFactors::new(a, b, c)?;
    if factors.rank() != rank {
        return Err(FitError::Shape(format!("record says rank {rank}, factors have {}", factors.rank())));
    }
    if objective_trace.is_empty() {
        return Err(lines.err("empty objective trace").into());
    }
    Ok(FitResult { factors, objective_trace, converged, sweeps_used, restart_index, restart_objectives, undetermined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpd::{masked_als_fit, FitOptions};
    use crate::tensor::MaskTensor;

    #[test]
    fn record_round_trips() {
        let x = Tensor3::from_fn((4, 3, 5), |i, j, k| (i as f64 + 1.0) * (j as f64 - 0.5) + 0.1 * k as f64).unwrap();
        let mask = MaskTensor::from_fn(x.dims(), |i, _, k| i < 2 || k == 1).unwrap();
        let mut partial = mask.clone();
        partial.set(3, 0, 1, false);
        let fit = masked_als_fit(&x, &partial, 2, &FitOptions { restarts: 2, max_sweeps: 20, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_fit_record(&fit, &mut buf).unwrap();
        let back: FitResult<f64> = read_fit_record(&buf[..]).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = read_fit_record::<f64, _>("tensorse-fit 1\nrank x\n".as_bytes()).unwrap_err();
        assert_eq!(err, FitError::Tensor(TensorError::Parse { line: 2, message: "bad value `x`".into() }));
    }
}
