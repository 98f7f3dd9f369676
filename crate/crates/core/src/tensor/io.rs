//! Tensor serialization.
//!
//! Text: a header line `I J K` followed by `I·J·K` values, one per line, in
//! storage order (`i` fastest, then `j`, then `k`). Values are printed in the
//! shortest form that parses back to the same bits.
//!
//! Binary: the 5-byte magic `TSR3\x01`, three little-endian `u64` dims, then
//! the values as little-endian IEEE-754 `f64`.

use std::io::{BufRead, Read, Write};

use crate::scalar::Scalar;
use crate::tensor::{Tensor3, TensorError};

pub const TENSOR_BINARY_MAGIC: &[u8; 5] = b"TSR3\x01";

pub fn write_text<T: Scalar, W: Write>(t: &Tensor3<T>, mut w: W) -> Result<(), TensorError> {
    let (i, j, k) = t.dims();
    writeln!(w, "{i} {j} {k}")?;
    for v in t.storage() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_text<T: Scalar, R: BufRead>(r: R) -> Result<Tensor3<T>, TensorError> {
    let mut lines = r.lines().enumerate();
    let (header_no, header) = loop {
        match lines.next() {
            Some((n, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (n + 1, line);
                }
            }
            None => return Err(TensorError::Parse { line: 0, message: "missing `I J K` header".into() }),
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|tok| tok.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| TensorError::Parse { line: header_no, message: format!("bad header: {e}") })?;
    let [ni, nj, nk] = dims[..] else {
        return Err(TensorError::Parse { line: header_no, message: format!("header needs 3 dims, got {}", dims.len()) });
    };
    let expected = ni * nj * nk;
    let mut data = Vec::with_capacity(expected);
    for (n, line) in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<T>()
                .map_err(|_| TensorError::Parse { line: n + 1, message: format!("bad value `{tok}`") })?;
            data.push(v);
        }
    }
    if data.len() != expected {
        return Err(TensorError::LengthMismatch { expected, found: data.len() });
    }
    Tensor3::from_storage((ni, nj, nk), data)
}

pub fn write_binary<T: Scalar, W: Write>(t: &Tensor3<T>, mut w: W) -> Result<(), TensorError> {
    let (i, j, k) = t.dims();
    w.write_all(TENSOR_BINARY_MAGIC)?;
    for d in [i, j, k] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.storage() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<T: Scalar, R: Read>(mut r: R) -> Result<Tensor3<T>, TensorError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_BINARY_MAGIC {
        return Err(TensorError::Parse { line: 0, message: "bad binary tensor magic".into() });
    }
    let mut word = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut word)?;
        *d = u64::from_le_bytes(word) as usize;
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut word)?;
        data.push(T::of(f64::from_le_bytes(word)));
    }
    Tensor3::from_storage((dims[0], dims[1], dims[2]), data)
}
