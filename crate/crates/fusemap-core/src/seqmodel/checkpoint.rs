//! Flat binary checkpoint: a tensor dump plus a JSON trailer describing how
//! the model was produced.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DNFZ" | u32 version | u32 tensor count
//! per tensor: u16 name len | name | u8 rank | u32 dims... | f64 data...
//! JSON trailer | u64 trailer length
//! ```
//!
//! The trailer length sits at the very end so the metadata can be read
//! without walking the tensors.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqmodel::model::{Model, ModelConfig};
use crate::seqmodel::state::NormConstants;

const MAGIC: &[u8; 4] = b"DNFZ";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated or corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint contains {found} tensors, model expects {expected}")]
    TensorCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub first_loss: f64,
    /// Last few epoch losses, most recent last.
    pub loss_tail: Vec<f64>,
    pub budgets_seen: Vec<u64>,
    pub workloads: Vec<String>,
    pub batch: u64,
}

/// Present when the weights were fine-tuned from another checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lineage {
    pub parent_sha256: String,
    /// Fine-tune epochs over the parent's training epochs.
    pub epoch_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub norm: NormConstants,
    pub training: TrainingMeta,
    #[serde(default)]
    pub lineage: Option<Lineage>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &mut Model,
    meta: &CheckpointMeta,
) -> Result<(), CheckpointError> {
    let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    model.visit_params(|name, value, _, dims| {
        tensors.push((name.to_string(), dims.to_vec(), value.to_vec()));
    });

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, data) in &tensors {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(dims.len() as u8);
        for &d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let trailer = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&trailer);
    buf.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt("ran past end of file"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta), CheckpointError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return Err(CheckpointError::Corrupt("shorter than the trailer marker"));
    }
    let trailer_len =
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap()) as usize;
    let body_len = bytes
        .len()
        .checked_sub(8 + trailer_len)
        .ok_or(CheckpointError::Corrupt("trailer longer than file"))?;
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[body_len..bytes.len() - 8])?;

    let mut cur = Cursor { bytes: &bytes[..body_len], pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = cur.u32()? as usize;
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not utf-8"))?
            .to_string();
        let rank = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = cur.take(len * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, (dims, data));
    }
    if cur.pos != body_len {
        return Err(CheckpointError::Corrupt("unexpected bytes after tensors"));
    }

    let mut model = Model::new(meta.config.clone(), 0);
    let mut filled = 0usize;
    let mut failure: Option<CheckpointError> = None;
    model.visit_params(|name, value, _, dims| {
        if failure.is_some() {
            return;
        }
        match tensors.get(name) {
            None => failure = Some(CheckpointError::MissingTensor(name.to_string())),
            Some((file_dims, data)) => {
                if file_dims != dims {
                    failure = Some(CheckpointError::ShapeMismatch {
                        name: name.to_string(),
                        expected: dims.to_vec(),
                        found: file_dims.clone(),
                    });
                } else {
                    value.copy_from_slice(data);
                    filled += 1;
                }
            }
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if filled != count {
        return Err(CheckpointError::TensorCount { expected: filled, found: count });
    }
    Ok((model, meta))
}
