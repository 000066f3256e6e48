//! Binary matrix and label files.
//!
//! Matrix file, little-endian:
//!
//! ```text
//! "DSAL" | version u16 | rows u64 | cols u64 | rows*cols elements, row-major
//! ```
//!
//! Version 1 stores `f32` elements (embeddings). Version 2 stores `f64`
//! elements and is used for learner state, where truncation would break
//! bit-exact resumption.
//!
//! Label file: `"DSLB" | version u16 | rows u64 | rows * u32`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{DsalError, Result};
use crate::store::ClassId;

pub const MATRIX_MAGIC: &[u8; 4] = b"DSAL";
pub const LABEL_MAGIC: &[u8; 4] = b"DSLB";
pub const MATRIX_VERSION_F32: u16 = 1;
pub const MATRIX_VERSION_F64: u16 = 2;
pub const LABEL_VERSION: u16 = 1;

const MATRIX_HEADER_LEN: usize = 4 + 2 + 8 + 8;
const LABEL_HEADER_LEN: usize = 4 + 2 + 8;

/// Element width used when encoding a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn version(self) -> u16 {
        match self {
            Precision::F32 => MATRIX_VERSION_F32,
            Precision::F64 => MATRIX_VERSION_F64,
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

pub fn encode_matrix(m: &DMatrix<f64>, precision: Precision) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + rows * cols * precision.width());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&precision.version().to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            let v = m[(i, j)];
            match precision {
                Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

/// Decodes a matrix file image. `origin` only labels errors.
pub fn decode_matrix(bytes: &[u8], origin: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(DsalError::format(origin, "truncated header"));
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(DsalError::format(origin, "bad magic, expected \"DSAL\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    let precision = match version {
        MATRIX_VERSION_F32 => Precision::F32,
        MATRIX_VERSION_F64 => Precision::F64,
        v => return Err(DsalError::format(origin, format!("unsupported version {v}"))),
    };
    let rows = read_u64(&bytes[6..14]);
    let cols = read_u64(&bytes[14..22]);
    let payload = &bytes[MATRIX_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(precision.width() as u64))
        .ok_or_else(|| DsalError::format(origin, "header dimensions overflow"))?;
    if payload.len() as u64 != expected {
        return Err(DsalError::dim(format!(
            "{}: header declares {rows}x{cols} ({expected} payload bytes) but payload has {} bytes",
            origin.display(),
            payload.len()
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let values: Vec<f64> = match precision {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DsalError::NonFinite("matrix payload"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn encode_labels(labels: &[ClassId]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LABEL_HEADER_LEN + labels.len() * 4);
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&LABEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8], origin: &Path) -> Result<Vec<ClassId>> {
    if bytes.len() < LABEL_HEADER_LEN {
        return Err(DsalError::format(origin, "truncated header"));
    }
    if &bytes[0..4] != LABEL_MAGIC {
        return Err(DsalError::format(origin, "bad magic, expected \"DSLB\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != LABEL_VERSION {
        return Err(DsalError::format(origin, format!("unsupported version {version}")));
    }
    let rows = read_u64(&bytes[6..14]);
    let payload = &bytes[LABEL_HEADER_LEN..];
    if Some(payload.len() as u64) != rows.checked_mul(4) {
        return Err(DsalError::dim(format!(
            "{}: header declares {rows} labels but payload has {} bytes",
            origin.display(),
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().unwrap())
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, precision: Precision) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DsalError::NonFinite("matrix to write"));
    }
    fs::write(path, encode_matrix(m, precision)).map_err(|e| DsalError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| DsalError::io(path, e))?;
    decode_matrix(&bytes, path)
}

pub fn write_labels(path: &Path, labels: &[ClassId]) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(|e| DsalError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<ClassId>> {
    let bytes = fs::read(path).map_err(|e| DsalError::io(path, e))?;
    decode_labels(&bytes, path)
}
