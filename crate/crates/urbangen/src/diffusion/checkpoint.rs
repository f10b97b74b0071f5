//! Versioned binary checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian u32 JSON-header length, the
//! header, then the tensor payload as row-major float32 little-endian in
//! header order. Parameters are f64 in memory; the cast to f32 on disk is
//! the only lossy step.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchSpec, Denoiser};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"URBCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    /// "denoiser" or "controlnet".
    pub kind: String,
    pub arch: ArchSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_channels: Option<usize>,
    pub seed: u64,
    pub config_hash: String,
    pub tensors: Vec<TensorMeta>,
}

pub fn write_checkpoint(
    path: &Path,
    header: &mut CheckpointHeader,
    tensors: &[(String, Vec<usize>, Vec<f64>)],
) -> Result<()> {
    header.version = FORMAT_VERSION;
    header.tensors = tensors
        .iter()
        .map(|(name, shape, data)| TensorMeta {
            name: name.clone(),
            shape: shape.clone(),
            len: data.len(),
        })
        .collect();
    let header_json = serde_json::to_vec(header)
        .map_err(|e| Error::Invalid(format!("serialize checkpoint header: {e}")))?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&header_json).map_err(io)?;
    for (_, _, data) in tensors {
        for v in data {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<(String, Vec<f64>)>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let io = |e: std::io::Error| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::parse(path, "not a checkpoint file (bad magic)"));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(io)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json).map_err(io)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::parse(path, format!("checkpoint header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported checkpoint version {}", header.version),
        ));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for meta in &header.tensors {
        let mut buf = vec![0u8; meta.len * 4];
        r.read_exact(&mut buf).map_err(io)?;
        let data: Vec<f64> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        tensors.push((meta.name.clone(), data));
    }
    Ok((header, tensors))
}

pub fn save_denoiser(
    path: &Path,
    model: &Denoiser,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    let mut header = CheckpointHeader {
        version: FORMAT_VERSION,
        kind: "denoiser".into(),
        arch: *model.arch(),
        control_channels: None,
        seed,
        config_hash: config_hash.into(),
        tensors: Vec::new(),
    };
    write_checkpoint(path, &mut header, &model.named_tensors())
}

pub fn load_denoiser(path: &Path) -> Result<(Denoiser, CheckpointHeader)> {
    let (header, tensors) = read_checkpoint(path)?;
    if header.kind != "denoiser" {
        return Err(Error::parse(
            path,
            format!("expected a denoiser checkpoint, found {:?}", header.kind),
        ));
    }
    let mut model = Denoiser::init(header.arch, 0)?;
    for (name, data) in &tensors {
        model.set_named_tensor(name, data)?;
    }
    Ok((model, header))
}
