//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "PPOLICY\0"
//! version  u32 LE
//! hlen     u64 LE   length of the JSON header
//! header   hlen bytes of UTF-8 JSON: model, schema, stats, tensor table
//! data     for each tensor in table order: shape-product f32 LE values (row-major)
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::PolicyNetwork;
use super::params::PolicyParameters;
use super::{ModelConfig, PolicyError};
use crate::dataio::{NormStats, TaskSchema};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PPOLICY\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    schema: TaskSchema,
    stats: NormStats,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(params: &PolicyParameters) -> Vec<u8> {
    let tensors = params.network.tensors();
    let header = Header {
        model: params.model,
        schema: params.schema.clone(),
        stats: params.stats.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let n_values: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(20 + json.len() + 4 * n_values);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParameters, PolicyError> {
    let corrupt = |msg: &str| PolicyError::CorruptFile(msg.to_string());
    if bytes.len() < 20 {
        return Err(corrupt("file shorter than the fixed preamble"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(PolicyError::FormatVersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let body = &bytes[20..];
    let hlen = usize::try_from(hlen)
        .ok()
        .filter(|&h| h <= body.len())
        .ok_or_else(|| corrupt("header length exceeds file"))?;
    let header: Header = serde_json::from_slice(&body[..hlen])
        .map_err(|e| PolicyError::CorruptFile(format!("bad header: {e}")))?;
    let mut data = &body[hlen..];

    if !header.stats.is_valid() {
        return Err(corrupt("invalid normalization statistics"));
    }
    let dims = header
        .model
        .dims(header.schema.robot.len(), header.schema.object.len());
    let mut network = PolicyNetwork::<f32>::init(dims, &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| PolicyError::CorruptFile(format!("bad model: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> = network
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    let stored: Vec<(String, Vec<usize>)> = header
        .tensors
        .iter()
        .map(|e| (e.name.clone(), e.shape.clone()))
        .collect();
    if expected != stored {
        return Err(corrupt("tensor table does not match the model"));
    }
    for mut t in network.tensors_mut() {
        let n = t.len() * 4;
        if data.len() < n {
            return Err(corrupt("truncated tensor data"));
        }
        let (chunk, rest) = data.split_at(n);
        for (dst, src) in t.iter_mut().zip(chunk.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().expect("4 bytes"));
        }
        data = rest;
    }
    if !data.is_empty() {
        return Err(corrupt("trailing bytes after tensor data"));
    }
    Ok(PolicyParameters {
        model: header.model,
        schema: header.schema,
        stats: header.stats,
        network,
    })
}

pub fn save(params: &PolicyParameters, path: &Path) -> Result<(), PolicyError> {
    fs::write(path, to_bytes(params)).map_err(|e| PolicyError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load(path: &Path) -> Result<PolicyParameters, PolicyError> {
    let bytes = fs::read(path).map_err(|e| PolicyError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    from_bytes(&bytes)
}
