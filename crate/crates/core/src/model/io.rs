//! Flat binary parameter files.
//!
//! Layout: 8-byte magic `SSMAPAR1`, rows and columns as little-endian `u64`,
//! then `rows × cols` little-endian `f64` in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SSMAPAR1";
const HEADER_LEN: usize = 24;

pub fn encode_matrix(m: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> std::result::Result<Array2<f64>, String> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err("missing parameter file header".into());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let body = &bytes[HEADER_LEN..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(format!(
            "expected {rows}x{cols} values, found {} bytes",
            body.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| e.to_string())
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}
