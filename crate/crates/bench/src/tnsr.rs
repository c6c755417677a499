//! Tensor persistence.
//!
//! TNSR layout, all integers and floats little-endian:
//!
//! ```text
//! b"TNSR" | version: u16 = 1 | d: u16 | dims: d × u64 | data: N × f64
//! ```
//!
//! Data is row-major (last index fastest), so dims `[2, 2]` with data
//! `[1, 2, 3, 4]` is the matrix `[[1, 2], [3, 4]]`.
//!
//! The CSV form has a header `i0,…,i{d-1},value` and one row per entry in
//! the same order.

use std::fs;
use std::path::Path;

use tensor_iht::DenseTensor;

use crate::error::{BenchError, Result};
use crate::fmt_f64;

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u16 = 1;

pub fn encode_tensor(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.ndim() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.ndim() as u16).to_le_bytes());
    for &n in t.dims() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a TNSR byte buffer; `origin` only labels errors.
pub fn decode_tensor(bytes: &[u8], origin: &Path) -> Result<DenseTensor> {
    let err = |msg: String| BenchError::format(origin, msg);
    let mut cur = bytes;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(err(format!("truncated while reading {what}")));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4, "magic")? != MAGIC {
        return Err(err("bad magic, expected TNSR".into()));
    }
    let version = u16::from_le_bytes(take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let d = u16::from_le_bytes(take(2, "order")?.try_into().unwrap()) as usize;
    if d == 0 {
        return Err(err("tensor order must be at least 1".into()));
    }
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        let n = u64::from_le_bytes(take(8, "dims")?.try_into().unwrap());
        let n = usize::try_from(n).ok().filter(|&n| n > 0).ok_or_else(|| err(format!("invalid dimension {n}")))?;
        dims.push(n);
    }
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| err(format!("dims {dims:?} overflow")))?;
    let body = take(len.checked_mul(8).ok_or_else(|| err("size overflow".into()))?, "data")?;
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if !cur.is_empty() {
        return Err(err(format!("{} trailing bytes", cur.len())));
    }
    DenseTensor::new(dims, data).map_err(|e| err(e.to_string()))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| BenchError::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    decode_tensor(&bytes, path)
}

pub fn save_tensor_csv(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..t.ndim()).map(|k| format!("i{k}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    let dims = t.dims();
    let mut idx = vec![0usize; dims.len()];
    for &v in t.data() {
        let mut rec: Vec<String> = idx.iter().map(usize::to_string).collect();
        rec.push(fmt_f64(v));
        w.write_record(&rec)?;
        for k in (0..dims.len()).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Reads the CSV form. Entries may come in any order; dims are inferred as
/// one past the largest index per mode and every entry must appear once.
pub fn load_tensor_csv(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let err = |msg: String| BenchError::format(path, msg);
    let mut r = csv::Reader::from_path(path)?;
    let d = r.headers()?.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| err("need index columns and a value column".into()))?;
    let mut entries = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(err(format!("record {} has {} fields", line + 1, rec.len())));
        }
        let idx: Vec<usize> = (0..d)
            .map(|k| rec[k].trim().parse().map_err(|_| err(format!("bad index {:?} in record {}", &rec[k], line + 1))))
            .collect::<Result<_>>()?;
        let v: f64 = rec[d].trim().parse().map_err(|_| err(format!("bad value {:?} in record {}", &rec[d], line + 1)))?;
        entries.push((idx, v));
    }
    if entries.is_empty() {
        return Err(err("no entries".into()));
    }
    let dims: Vec<usize> = (0..d).map(|k| entries.iter().map(|(i, _)| i[k]).max().unwrap() + 1).collect();
    let len: usize = dims.iter().product();
    if len != entries.len() {
        return Err(err(format!("{} entries for dims {dims:?}", entries.len())));
    }
    let mut data = vec![0.0; len];
    let mut seen = vec![false; len];
    for (idx, v) in entries {
        let flat = idx.iter().zip(&dims).fold(0, |acc, (&i, &n)| acc * n + i);
        if std::mem::replace(&mut seen[flat], true) {
            return Err(err(format!("duplicate entry {idx:?}")));
        }
        data[flat] = v;
    }
    DenseTensor::new(dims, data).map_err(|e| err(e.to_string()))
}
