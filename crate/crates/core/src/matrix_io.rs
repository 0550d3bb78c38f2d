//! `MVRL` dense matrix files.
//!
//! Layout (all little-endian):
//!
//! | bytes | field                      |
//! |-------|----------------------------|
//! | 4     | magic `MVRL`               |
//! | 4     | version (`u32`, always 1)  |
//! | 8     | rows (`u64`)               |
//! | 8     | cols (`u64`)               |
//! | 8·r·c | row-major `f64` payload    |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MVRL_MAGIC: &[u8; 4] = b"MVRL";
pub const MVRL_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Header fields of an `MVRL` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub version: u32,
    pub rows: u64,
    pub cols: u64,
}

pub fn encode_matrix(matrix: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = matrix.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    buf.extend_from_slice(MVRL_MAGIC);
    buf.extend_from_slice(&MVRL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u64).to_le_bytes());
    buf.extend_from_slice(&(cols as u64).to_le_bytes());
    // iter() walks in logical row-major order regardless of memory layout
    for v in matrix.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_header(bytes: &[u8]) -> Result<MatrixHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse(format!(
            "MVRL header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MVRL_MAGIC {
        return Err(Error::Parse("bad MVRL magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MVRL_VERSION {
        return Err(Error::Parse(format!("unsupported MVRL version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    Ok(MatrixHeader {
        version,
        rows,
        cols,
    })
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    let header = decode_header(bytes)?;
    let count = header
        .rows
        .checked_mul(header.cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::Parse("MVRL dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(Error::Parse(format!(
            "MVRL payload is {} bytes, expected {}",
            payload.len(),
            count * 8
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((header.rows as usize, header.cols as usize), data)
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_matrix(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_matrix(matrix))
        .map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

/// Reads only the 24-byte header.
pub fn read_header(path: impl AsRef<Path>) -> Result<MatrixHeader> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = [0u8; HEADER_LEN];
    file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    decode_header(&buf)
}
