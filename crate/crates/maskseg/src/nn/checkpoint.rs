//! MKCKPT01 checkpoint container: JSON header (config + tensor index)
//! followed by concatenated f32 little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;
use super::unet::{ModelParams, UNetConfig};

const CKPT_MAGIC: &[u8; 8] = b"MKCKPT01";

#[derive(Serialize, Deserialize)]
struct TensorIndexEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in f32 elements.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct CkptHeader {
    config: UNetConfig,
    tensors: Vec<TensorIndexEntry>,
}

pub fn checkpoint_write(params: &ModelParams<f32>, cfg: &UNetConfig, path: &Path) -> Result<()> {
    if !params.matches(cfg) {
        return Err(Error::validation("parameters do not match the given config"));
    }
    let mut offset = 0usize;
    let tensors = params
        .entries
        .iter()
        .map(|(name, t)| {
            let entry = TensorIndexEntry { name: name.clone(), shape: t.shape.clone(), offset };
            offset += t.len();
            entry
        })
        .collect();
    let header = CkptHeader { config: *cfg, tensors };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization cannot fail");
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in &params.entries {
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_read(path: &Path) -> Result<(UNetConfig, ModelParams<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("checkpoint truncated before magic"))?;
    if &magic != CKPT_MAGIC {
        return Err(Error::format(format!(
            "bad checkpoint magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::format("checkpoint truncated in header length"))?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::format("checkpoint truncated in header"))?;
    let header: CkptHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(format!("bad checkpoint header: {e}")))?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 4 != 0 {
        return Err(Error::format("checkpoint payload length is not a multiple of 4"));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut expected_offset = 0usize;
    let mut entries = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        if entry.offset != expected_offset {
            return Err(Error::format(format!(
                "tensor {} at offset {} where {} was expected",
                entry.name, entry.offset, expected_offset
            )));
        }
        let count: usize = entry.shape.iter().product();
        if entry.offset + count > floats.len() {
            return Err(Error::format(format!(
                "checkpoint payload truncated in tensor {}",
                entry.name
            )));
        }
        entries.push((
            entry.name.clone(),
            Tensor::new(entry.shape.clone(), floats[entry.offset..entry.offset + count].to_vec())?,
        ));
        expected_offset += count;
    }
    if expected_offset != floats.len() {
        return Err(Error::format("checkpoint payload longer than the tensor index"));
    }
    let params = ModelParams { entries };
    if !params.matches(&header.config) {
        return Err(Error::validation("checkpoint tensors do not match its config"));
    }
    Ok((header.config, params))
}

/// Read a checkpoint and require it to carry the expected config.
pub fn checkpoint_read_expect(path: &Path, expected: &UNetConfig) -> Result<ModelParams<f32>> {
    let (config, params) = checkpoint_read(path)?;
    if config != *expected {
        return Err(Error::validation(format!(
            "checkpoint config {config:?} does not match requested {expected:?}"
        )));
    }
    Ok(params)
}
