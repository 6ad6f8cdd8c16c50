//! Posterior draw persistence.
//!
//! Binary layout, all integers little-endian `u32`:
//! `magic | version | draws | columns`, then per column a length-prefixed
//! UTF-8 label, then the values column-major as little-endian `f64`.

use std::io::{Read, Write};

use super::PosteriorDraws;
use crate::error::{Error, Result};

pub const DRAWS_MAGIC: u32 = u32::from_le_bytes(*b"RSDR");
pub const DRAWS_VERSION: u32 = 1;

/// Shortest representation that round-trips, which never exceeds 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Columns of a draws table: parameters, then `F[i]` per observation.
fn columns(draws: &PosteriorDraws) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut labels: Vec<String> = draws.labels.iter().map(|l| l.to_string()).collect();
    let mut cols: Vec<Vec<f64>> = (0..draws.labels.len()).map(|c| draws.param_column(c)).collect();
    for i in 0..draws.num_obs() {
        labels.push(format!("F[{i}]"));
        cols.push(draws.cdf_for_obs(i));
    }
    (labels, cols)
}

/// Long format: `iteration,parameter,index,value`.
pub fn write_draws_long_csv<W: Write>(draws: &PosteriorDraws, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "parameter", "index", "value"])?;
    for d in 0..draws.num_draws() {
        let it = draws.iterations[d].to_string();
        for (label, v) in draws.labels.iter().zip(draws.param_row(d)) {
            w.write_record([it.as_str(), &label.name, &label.index.to_string(), &fmt_f64(*v)])?;
        }
        for (i, v) in draws.cdf_row(d).iter().enumerate() {
            w.write_record([it.as_str(), "F", &i.to_string(), &fmt_f64(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_draws_binary<W: Write>(draws: &PosteriorDraws, mut out: W) -> Result<()> {
    let (labels, cols) = columns(draws);
    let n = draws.num_draws() as u32;
    for h in [DRAWS_MAGIC, DRAWS_VERSION, n, labels.len() as u32] {
        out.write_all(&h.to_le_bytes())?;
    }
    for l in &labels {
        out.write_all(&(l.len() as u32).to_le_bytes())?;
        out.write_all(l.as_bytes())?;
    }
    for c in &cols {
        for v in c {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Decoded columnar file.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDraws {
    pub labels: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_draws_binary<R: Read>(mut r: R) -> Result<BinaryDraws> {
    if read_u32(&mut r)? != DRAWS_MAGIC {
        return Err(Error::Schema("not a draws file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != DRAWS_VERSION {
        return Err(Error::Schema(format!("unsupported draws version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let c = read_u32(&mut r)? as usize;
    let mut labels = Vec::with_capacity(c);
    for _ in 0..c {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        labels.push(String::from_utf8(buf).map_err(|e| Error::Schema(e.to_string()))?);
    }
    let mut columns = Vec::with_capacity(c);
    let mut b = [0u8; 8];
    for _ in 0..c {
        let mut col = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b)?;
            col.push(f64::from_le_bytes(b));
        }
        columns.push(col);
    }
    Ok(BinaryDraws { labels, columns })
}
