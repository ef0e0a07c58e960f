//! `fvecs` / `bvecs` / `ivecs` records: a little-endian `i32` dimension
//! followed by that many `f32`, `u8` or `i32` values. Raw `f32` files are
//! bare row-major values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vectors::VectorSet;

fn ingest(record: usize, reason: impl Into<String>) -> Error {
    Error::Ingest {
        record,
        reason: reason.into(),
    }
}

/// Splits `bytes` into records of `width`-byte values, calling `row` with
/// each record's payload.
fn parse_records(bytes: &[u8], width: usize, mut row: impl FnMut(usize, &[u8]) -> Result<()>) -> Result<usize> {
    if bytes.is_empty() {
        return Err(ingest(0, "file holds no records"));
    }
    let mut pos = 0;
    let mut d0 = None;
    let mut record = 0;
    while pos < bytes.len() {
        let head = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| ingest(record, "truncated dimension header"))?;
        let d = i32::from_le_bytes(head.try_into().unwrap());
        if d <= 0 {
            return Err(ingest(record, format!("invalid dimension {d}")));
        }
        let d = d as usize;
        match d0 {
            None => d0 = Some(d),
            Some(d0) if d0 != d => {
                return Err(ingest(record, format!("dimension {d} differs from first record's {d0}")));
            }
            _ => {}
        }
        pos += 4;
        let body = bytes
            .get(pos..pos + d * width)
            .ok_or_else(|| ingest(record, "truncated record"))?;
        row(record, body)?;
        pos += d * width;
        record += 1;
    }
    Ok(d0.unwrap())
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<VectorSet<f32>> {
    let mut data = Vec::new();
    let d = parse_records(bytes, 4, |record, body| {
        for c in body.chunks_exact(4) {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(ingest(record, "non-finite value"));
            }
            data.push(v);
        }
        Ok(())
    })?;
    VectorSet::new(d, data)
}

pub fn parse_bvecs(bytes: &[u8]) -> Result<VectorSet<f32>> {
    let mut data = Vec::new();
    let d = parse_records(bytes, 1, |_, body| {
        data.extend(body.iter().map(|&b| b as f32));
        Ok(())
    })?;
    VectorSet::new(d, data)
}

pub fn parse_raw_f32(bytes: &[u8], d: usize) -> Result<VectorSet<f32>> {
    if d == 0 {
        return Err(Error::usage("raw f32 files need a dimension of at least 1"));
    }
    if bytes.is_empty() {
        return Err(ingest(0, "file holds no records"));
    }
    let row_bytes = 4 * d;
    if !bytes.len().is_multiple_of(row_bytes) {
        return Err(ingest(bytes.len() / row_bytes, "truncated record"));
    }
    let mut data = Vec::with_capacity(bytes.len() / 4);
    for (i, c) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(ingest(i / d, "non-finite value"));
        }
        data.push(v);
    }
    VectorSet::new(d, data)
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorSet<f32>> {
    parse_fvecs(&fs::read(path)?)
}

pub fn read_bvecs(path: impl AsRef<Path>) -> Result<VectorSet<f32>> {
    parse_bvecs(&fs::read(path)?)
}

pub fn read_raw_f32(path: impl AsRef<Path>, d: usize) -> Result<VectorSet<f32>> {
    parse_raw_f32(&fs::read(path)?, d)
}

pub fn write_fvecs(path: impl AsRef<Path>, set: &VectorSet<f32>) -> Result<()> {
    let mut out = Vec::with_capacity(set.len() * (4 + 4 * set.dim()));
    for row in set.rows() {
        out.extend_from_slice(&(set.dim() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Every value must be an integer in `0..=255`.
pub fn write_bvecs(path: impl AsRef<Path>, set: &VectorSet<f32>) -> Result<()> {
    let mut out = Vec::with_capacity(set.len() * (4 + set.dim()));
    for (i, row) in set.rows().enumerate() {
        out.extend_from_slice(&(set.dim() as i32).to_le_bytes());
        for &v in row {
            if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                return Err(Error::usage(format!("row {i}: {v} does not fit in a byte")));
            }
            out.push(v as u8);
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn write_ivecs(path: impl AsRef<Path>, rows: &[Vec<u32>]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        out.extend_from_slice(&(r.len() as i32).to_le_bytes());
        for &v in r {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    let bytes = fs::read(path)?;
    let mut rows = Vec::new();
    parse_records(&bytes, 4, |record, body| {
        let mut r = Vec::with_capacity(body.len() / 4);
        for c in body.chunks_exact(4) {
            let v = i32::from_le_bytes(c.try_into().unwrap());
            if v < 0 {
                return Err(ingest(record, format!("negative index {v}")));
            }
            r.push(v as u32);
        }
        rows.push(r);
        Ok(())
    })?;
    Ok(rows)
}
