//! Binary snapshot files.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | content                     |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `b"VSPC"`             |
//! | 4      | 4    | format version (`u32`)      |
//! | 8      | 4    | grid size `n` (`u32`)       |
//! | 12     | 4    | field count (`u32`)         |
//! | 16     | 8    | time (`f64`)                |
//! | 24     | 8    | reserved, zero              |
//! | 32     | ...  | `field_count × n²` `f64`s   |
//!
//! Each field is written as physical samples in row-major order
//! (`x1` slow, `x2` fast).

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::fields::{FieldError, GridSpec, ScalarField};

pub const MAGIC: [u8; 4] = *b"VSPC";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Decoded snapshot contents.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub fields: Vec<ScalarField>,
}

pub fn write_snapshot<W: Write>(mut out: W, time: f64, fields: &[ScalarField]) -> Result<(), SnapshotError> {
    let n = fields.first().map(|f| f.grid().n()).unwrap_or(0);
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(n as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(fields.len() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&time.to_le_bytes());
    out.write_all(&header)?;
    for field in fields {
        let values = field.physical()?;
        let mut buf = Vec::with_capacity(values.len() * 8);
        for v in values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Snapshot, SnapshotError> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let n = u32_at(8) as usize;
    let count = u32_at(12) as usize;
    let time = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let grid = GridSpec::new(n)?;
    let mut raw = vec![0u8; grid.len() * 8];
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        fields.push(ScalarField::from_physical(&grid, values)?);
    }
    Ok(Snapshot { time, fields })
}
