//! Binary feature files: 4-byte magic, `T` and `dims` as little-endian
//! `u32`, then `T * dims` little-endian `f32` values in row-major order.

use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"SBF1";
const HEADER_LEN: usize = 12;

pub fn encode_matrix(m: &Array2<f32>) -> Vec<u8> {
    let (t, d) = m.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f32>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Validation("not a feature file (bad magic)".into()));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * t * d {
        return Err(Error::Validation(format!(
            "feature file declares {t}x{d} but holds {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Array2::from_shape_vec((t, d), values).map_err(|e| Error::Shape(e.to_string()))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f32>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("feature file {}", path.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}
