//! On-disk formats: VFLD grids, JSON documents and JSON-lines logs.
//!
//! A VFLD file is the 8-byte magic `VFLD\0\0\0\x01`, three axis headers
//! (`lo: f64`, `hi: f64`, `count: u64`, `periodic: u8`, all little-endian),
//! then the row-major payload: 8-byte floats for a field, one byte per cell
//! for a mask.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisSpec, BoolMask, Grid3, ScalarField};

pub const VFLD_MAGIC: [u8; 8] = *b"VFLD\0\0\0\x01";
const AXIS_BYTES: usize = 8 + 8 + 8 + 1;
pub const VFLD_HEADER_BYTES: usize = VFLD_MAGIC.len() + 3 * AXIS_BYTES;

fn encode_header(grid: &Grid3, out: &mut Vec<u8>) {
    out.extend_from_slice(&VFLD_MAGIC);
    for axis in &grid.axes {
        out.extend_from_slice(&axis.lo.to_le_bytes());
        out.extend_from_slice(&axis.hi.to_le_bytes());
        out.extend_from_slice(&(axis.count as u64).to_le_bytes());
        out.push(axis.periodic as u8);
    }
}

fn decode_header(bytes: &[u8]) -> Result<Grid3> {
    if bytes.len() < VFLD_HEADER_BYTES {
        return Err(Error::Format(format!("VFLD header truncated at {} bytes", bytes.len())));
    }
    if bytes[..8] != VFLD_MAGIC {
        return Err(Error::Format("bad VFLD magic".into()));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let mut axes = [AxisSpec { lo: 0.0, hi: 0.0, count: 0, periodic: false }; 3];
    for (n, axis) in axes.iter_mut().enumerate() {
        let o = 8 + n * AXIS_BYTES;
        let periodic = match bytes[o + 24] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("periodic flag must be 0 or 1, got {b}"))),
        };
        let count = usize::try_from(u64_at(o + 16)).map_err(|_| Error::Format("axis count overflows".into()))?;
        *axis = AxisSpec { lo: f64_at(o), hi: f64_at(o + 8), count, periodic };
    }
    let grid = Grid3 { axes };
    grid.validate().map_err(|e| Error::Format(format!("invalid VFLD grid: {e}")))?;
    Ok(grid)
}

fn payload<'a>(bytes: &'a [u8], grid: &Grid3, width: usize) -> Result<&'a [u8]> {
    let expected = grid
        .len()
        .checked_mul(width)
        .and_then(|n| n.checked_add(VFLD_HEADER_BYTES))
        .ok_or_else(|| Error::Format("VFLD size overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!("VFLD has {} bytes, expected {expected}", bytes.len())));
    }
    Ok(&bytes[VFLD_HEADER_BYTES..])
}

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let mut out = Vec::with_capacity(VFLD_HEADER_BYTES + 8 * field.values().len());
    encode_header(field.grid(), &mut out);
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField> {
    let grid = decode_header(bytes)?;
    let body = payload(bytes, &grid, 8)?;
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::new(grid, values)
}

pub fn encode_mask(mask: &BoolMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(VFLD_HEADER_BYTES + mask.bits().len());
    encode_header(mask.grid(), &mut out);
    out.extend(mask.bits().iter().map(|&b| b as u8));
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<BoolMask> {
    let grid = decode_header(bytes)?;
    let body = payload(bytes, &grid, 1)?;
    let bits = body
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("mask byte must be 0 or 1, got {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    BoolMask::new(grid, bits)
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    std::fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    decode_field(&read_all(path)?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BoolMask) -> Result<()> {
    std::fs::write(path, encode_mask(mask))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BoolMask> {
    decode_mask(&read_all(path)?)
}

fn read_all(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Sidecar for a solved tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrtSidecar {
    pub model: String,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub unsafe_cells: usize,
    pub total_cells: usize,
}

/// Sidecar for a learned constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSidecar {
    pub threshold: f64,
    pub epsilon: f64,
    pub epoch: usize,
}
