//! FLCK model checkpoints and their JSON sidecar.
//!
//! ```text
//! "FLCK" | u32 version=1 | u32 n | n bytes of HeadConfig JSON | u64 init seed
//!        | u64 P | P × f64 parameters in HeadParams::tensors order
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fluency_core::head::{HeadConfig, HeadModel};
use fluency_core::layers::LayerScheme;
use fluency_core::trainer::{TrainConfig, TrainReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FLCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::CorruptCheckpoint(msg.into())
}

/// Training metadata stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub layers: LayerScheme,
    /// Resolved layer weights, one per backbone layer.
    pub layer_weights: Vec<f64>,
    pub report: Option<TrainReport>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

pub fn encode(model: &HeadModel) -> Vec<u8> {
    let config = serde_json::to_vec(&model.config).expect("head config serializes");
    let params = model.params.to_flat();
    let mut out = Vec::with_capacity(28 + config.len() + 8 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of file"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<HeadModel, CheckpointError> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    let config: HeadConfig = serde_json::from_slice(c.take(n)?)
        .map_err(|e| corrupt(format!("head config: {e}")))?;
    let seed = c.u64()?;
    let p = c.u64()?;
    let mut model = HeadModel::init(config, seed).map_err(|e| corrupt(e.to_string()))?;
    if p != model.params.len() as u64 {
        return Err(corrupt(format!(
            "{p} parameters stored, config needs {}",
            model.params.len()
        )));
    }
    let raw = c.take(8 * p as usize)?;
    if c.at != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite parameter"));
    }
    model.params.set_flat(&flat);
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &HeadModel) -> Result<(), CheckpointError> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<HeadModel, CheckpointError> {
    decode(&fs::read(path)?)
}

pub fn write_meta(path: &Path, meta: &CheckpointMeta) -> Result<(), CheckpointError> {
    let mut text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<CheckpointMeta, CheckpointError> {
    serde_json::from_slice(&fs::read(path)?).map_err(|e| corrupt(format!("sidecar: {e}")))
}
