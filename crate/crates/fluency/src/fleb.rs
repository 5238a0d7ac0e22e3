//! FLEB: per-recording hidden states, all layers, little-endian f32.
//!
//! ```text
//! "FLEB" | u32 version=1 | u32 L | u32 T | u32 D | f32 stride_s | f32 offset_s | L·T·D × f32
//! ```
//! Values are layer-major, then frame, then dimension.

use std::fs;
use std::io;
use std::path::Path;

use fluency_core::layers::{EmbeddingTensor, LayerError};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FLEB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
pub enum FlebError {
    #[error("bad magic {0:?}, expected \"FLEB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported FLEB version {0}")]
    UnsupportedVersion(u32),
    #[error("payload is {actual} bytes but the header declares {expected}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("bad header: {0}")]
    BadHeader(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn encode(tensor: &EmbeddingTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * tensor.values().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [tensor.layers(), tensor.frames(), tensor.dim()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&tensor.frame_stride_s.to_le_bytes());
    out.extend_from_slice(&tensor.frame_offset_s.to_le_bytes());
    for v in tensor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a whole file image. The payload length is checked against the
/// header before any value is decoded.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingTensor, FlebError> {
    if bytes.len() < 4 {
        return Err(FlebError::TruncatedFile {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FlebError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FlebError::TruncatedFile {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(FlebError::UnsupportedVersion(version));
    }
    let (l, t, d) = (u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16));
    let stride = f32_at(bytes, 20);
    let offset = f32_at(bytes, 24);
    if l == 0 || t == 0 || d == 0 {
        return Err(FlebError::BadHeader("L, T and D must be positive"));
    }
    if !(stride.is_finite() && stride > 0.0 && offset.is_finite()) {
        return Err(FlebError::BadHeader("frame stride must be positive and timing finite"));
    }
    let expected = 4 * l as u64 * t as u64 * d as u64;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if expected != actual {
        return Err(FlebError::TruncatedFile { expected, actual });
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tensor = EmbeddingTensor::new(l as usize, t as usize, d as usize, values).map_err(
        |e| match e {
            LayerError::NonFinite(i) => FlebError::NonFiniteValue(i),
            _ => FlebError::BadHeader("shape does not match payload"),
        },
    )?;
    Ok(tensor.with_timing(stride, offset))
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingTensor, FlebError> {
    decode(&fs::read(path)?)
}

pub fn write_embedding(path: &Path, tensor: &EmbeddingTensor) -> Result<(), FlebError> {
    fs::write(path, encode(tensor))?;
    Ok(())
}
