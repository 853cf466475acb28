//! Checkpoint format: `LUPIDET1`, u32 little-endian header length, UTF-8 JSON header,
//! then each tensor as little-endian f32 in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetectorConfig, DetectorModel, ParamStore, Role, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LUPIDET1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: DetectorConfig,
    role: Role,
    tensors: Vec<TensorHeader>,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

/// A model plus free-form training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DetectorModel,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub fn save_checkpoint(
    model: &DetectorModel,
    metadata: &BTreeMap<String, serde_json::Value>,
) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config,
        role: model.role,
        tensors: model
            .params
            .tensors()
            .iter()
            .map(|t| TensorHeader {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params.tensors() {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing LUPIDET1 magic"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json)?;
    let mut pos = 12 + len;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for th in &header.tensors {
        let n: usize = th.shape.iter().product();
        let raw = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| bad(&format!("truncated tensor {}", th.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        tensors.push(Tensor {
            name: th.name.clone(),
            shape: th.shape.clone(),
            data,
        });
        pos += 4 * n;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    let model = DetectorModel::from_params(header.config, header.role, ParamStore::from_tensors(tensors)?)?;
    Ok(Checkpoint {
        model,
        metadata: header.metadata,
    })
}

pub fn write_checkpoint(
    path: &Path,
    model: &DetectorModel,
    metadata: &BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    fs::write(path, save_checkpoint(model, metadata)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint(&bytes)
}
