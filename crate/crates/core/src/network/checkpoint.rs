//! `.zbnn` checkpoint encoding.
//!
//! Layout: `b"ZBNN"`, version (`u32` LE), metadata length (`u32` LE), UTF-8
//! JSON metadata, every state tensor as raw little-endian `f64` in
//! declaration order, then a CRC32 (`u32` LE) of all preceding bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::layers::LayerSpec;

pub const MAGIC: &[u8; 4] = b"ZBNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    name: String,
    input_shape: Vec<usize>,
    class_count: usize,
    zero_bias: bool,
    layers: Vec<LayerSpec>,
    provenance: serde_json::Value,
    tensors: Vec<Vec<usize>>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn encode_checkpoint(net: &Network) -> Result<Vec<u8>> {
    let state = net.state();
    let meta = Metadata {
        name: net.name.clone(),
        input_shape: net.input_shape.clone(),
        class_count: net.class_count,
        zero_bias: net.zero_bias,
        layers: net.specs(),
        provenance: net.provenance.clone(),
        tensors: state.iter().map(|t| t.dims().to_vec()).collect(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| format_err(e.to_string()))?;
    let meta_len = u32::try_from(json.len()).map_err(|_| format_err("metadata too large"))?;
    let values: usize = state.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&json);
    for t in state {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err("checkpoint truncated in header"))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 16 {
        return Err(format_err("checkpoint truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err("bad magic, not a zbnn checkpoint"));
    }
    let version = read_u32(bytes, 4)?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(format!("unsupported checkpoint version {version}")));
    }
    let body_end = bytes.len() - 4;
    let stored_crc = read_u32(bytes, body_end)?;
    if crc32fast::hash(&bytes[..body_end]) != stored_crc {
        return Err(format_err("checksum mismatch"));
    }
    let meta_len = read_u32(bytes, 8)? as usize;
    let meta_end = 12usize.checked_add(meta_len).filter(|&e| e <= body_end).ok_or_else(|| format_err("metadata length exceeds file"))?;
    let meta: Metadata = serde_json::from_slice(&bytes[12..meta_end]).map_err(|e| format_err(format!("metadata: {e}")))?;

    let mut net = Network::from_specs(meta.name, meta.input_shape, &meta.layers, meta.zero_bias)
        .map_err(|e| format_err(format!("invalid network description: {e}")))?;
    if net.class_count != meta.class_count {
        return Err(format_err("class count disagrees with layer stack"));
    }
    net.provenance = meta.provenance;

    let mut cursor = meta_end;
    let mut slots = net.state_mut();
    if slots.len() != meta.tensors.len() {
        return Err(format_err("tensor count disagrees with layer stack"));
    }
    for (slot, dims) in slots.iter_mut().zip(&meta.tensors) {
        if slot.dims() != dims.as_slice() {
            return Err(format_err(format!("tensor shape {:?} disagrees with layer ({})", dims, slot.shape())));
        }
        let n = slot.len();
        let end = cursor + 8 * n;
        if end > body_end {
            return Err(format_err("tensor data truncated"));
        }
        for (v, chunk) in slot.data_mut().iter_mut().zip(bytes[cursor..end].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        cursor = end;
    }
    if cursor != body_end {
        return Err(format_err("trailing bytes after tensor data"));
    }
    if net.zero_bias && !net.has_no_bias() {
        return Err(format_err("zero-bias flag set on a network with bias parameters"));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(net)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    decode_checkpoint(&std::fs::read(path)?)
}
