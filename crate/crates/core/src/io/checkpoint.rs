//! The LRIS checkpoint container.
//!
//! Layout: the 4 magic bytes `LRIS`, a little-endian `u32` format version, a
//! little-endian `u32` header length, the UTF-8 JSON header, then the tensor
//! payload as little-endian `f32`. Header offsets are byte offsets into the
//! payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::EdmConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::Tier;
use crate::tensor::Tensor;
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 4] = b"LRIS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub tier: Tier,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub diffusion: EdmConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Optimizer steps taken when the checkpoint was written.
    #[serde(default)]
    pub step: usize,
    pub tensors: Vec<TensorEntry>,
}

/// A model with the settings needed to sample from it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub diffusion: EdmConfig,
    pub train: Option<TrainConfig>,
    pub step: usize,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for e in ck.model.store.entries() {
        tensors.push(TensorEntry {
            name: e.name.clone(),
            shape: e.value.shape().to_vec(),
            tier: e.tier,
            offset: payload.len(),
        });
        for v in e.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        model: ck.model.cfg.clone(),
        diffusion: ck.diffusion,
        train: ck.train.clone(),
        step: ck.step,
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint header", e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(b: &[u8]) -> Result<Checkpoint> {
    let err = |ctx: &str, d: String| Error::format(format!("checkpoint {ctx}"), d);
    if b.len() < 12 || &b[0..4] != MAGIC {
        return Err(err("magic", "not an LRIS file".into()));
    }
    let version = u32::from_le_bytes([b[4], b[5], b[6], b[7]]);
    if version != VERSION {
        return Err(err("version", format!("unsupported version {version}, expected {VERSION}")));
    }
    let len = u32::from_le_bytes([b[8], b[9], b[10], b[11]]) as usize;
    if 12 + len > b.len() {
        return Err(err("header", format!("declares {len} bytes but the file is {} bytes", b.len())));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&b[12..12 + len]).map_err(|e| err("header", e.to_string()))?;
    let payload = &b[12 + len..];
    let mut model = Model::new(header.model.clone(), 0).map_err(|e| err("model config", e.to_string()))?;
    if header.tensors.len() != model.store.len() {
        return Err(err(
            "tensor index",
            format!("{} tensors, the model has {}", header.tensors.len(), model.store.len()),
        ));
    }
    for t in &header.tensors {
        let id = model
            .store
            .id(&t.name)
            .ok_or_else(|| err("tensor index", format!("unknown tensor {}", t.name)))?;
        let numel: usize = t.shape.iter().product();
        let end = t.offset.checked_add(numel * 4).filter(|&e| e <= payload.len());
        let Some(end) = end else {
            return Err(err("payload", format!("tensor {} runs past the end of the payload", t.name)));
        };
        let expected = model.store.get(id).shape();
        if expected != t.shape.as_slice() {
            return Err(err("tensor index", format!("tensor {} has shape {:?}, the model expects {expected:?}", t.name, t.shape)));
        }
        if model.store.entries()[id.index()].tier != t.tier {
            return Err(err("tensor index", format!("tensor {} has tier {:?}", t.name, t.tier)));
        }
        let values = payload[t.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        model.store.set(id, Tensor::new(values, &t.shape))?;
    }
    Ok(Checkpoint {
        model,
        diffusion: header.diffusion,
        train: header.train,
        step: header.step,
    })
}

/// Writes through a temporary file and a rename, so an interrupted save never
/// replaces a good checkpoint with a partial one.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
