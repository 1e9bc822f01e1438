//! Checkpoint file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"PSTLCKP1"
//! version u32      1
//! dtype   u8       0 = f32, 1 = f64
//! hdr_len u32      header JSON length
//! header  bytes    {"config": ModelConfig, "vocab": Vocab}
//! count   u32      number of tensors
//! tensor* name_len u16, name bytes, rows u32, cols u32, raw data (LE)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::{Real, Shape};
use crate::stl::Vocab;

use super::{Model, ModelConfig};
use crate::model::ParamSet;

const MAGIC: &[u8; 8] = b"PSTLCKP1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint layout mismatch: {0}")]
    Layout(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
}

/// A checkpoint restored at its stored precision.
pub enum LoadedModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

impl LoadedModel {
    pub fn config(&self) -> &ModelConfig {
        match self {
            LoadedModel::F32(m) => &m.cfg,
            LoadedModel::F64(m) => &m.cfg,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            LoadedModel::F32(m) => &m.vocab,
            LoadedModel::F64(m) => &m.vocab,
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            LoadedModel::F32(_) => "f32",
            LoadedModel::F64(_) => "f64",
        }
    }
}

fn dtype_tag<T: Real>() -> u8 {
    if std::mem::size_of::<T>() == 4 {
        0
    } else {
        1
    }
}

/// Serializes a model; returns the SHA-256 fingerprint of the bytes written.
pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<String, CheckpointError> {
    let bytes = to_bytes(model);
    let fingerprint = hex_sha256(&bytes);
    let tmp = path.with_extension("tmp");
    let io_err = |e: std::io::Error| CheckpointError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(&bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(fingerprint)
}

pub fn to_bytes<T: Real>(model: &Model<T>) -> Vec<u8> {
    let header = Header { config: model.cfg.clone(), vocab: model.vocab.clone() };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dtype_tag::<T>());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for i in 0..model.params.len() {
        let name = model.params.name(i).as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        let shape = model.params.shape(i);
        out.extend_from_slice(&(shape.0 as u32).to_le_bytes());
        out.extend_from_slice(&(shape.1 as u32).to_le_bytes());
        for v in model.params.value(i) {
            if dtype_tag::<T>() == 0 {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            } else {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    out
}

/// Loads a checkpoint and returns it with its SHA-256 fingerprint.
pub fn load_checkpoint(path: &Path) -> Result<(LoadedModel, String), CheckpointError> {
    let io_err = |e: std::io::Error| CheckpointError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io_err)?.read_to_end(&mut bytes).map_err(io_err)?;
    let fingerprint = hex_sha256(&bytes);
    let model = from_bytes(&bytes)?;
    Ok((model, fingerprint))
}

pub fn from_bytes(bytes: &[u8]) -> Result<LoadedModel, CheckpointError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
    }
    let dtype = cur.take(1)?[0];
    let hdr_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(cur.take(hdr_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    let mut vocab = header.vocab;
    vocab.reindex();
    header.config.validate().map_err(CheckpointError::Corrupt)?;

    match dtype {
        0 => Ok(LoadedModel::F32(read_model::<f32>(&mut cur, header.config, vocab)?)),
        1 => Ok(LoadedModel::F64(read_model::<f64>(&mut cur, header.config, vocab)?)),
        other => Err(CheckpointError::Corrupt(format!("unknown dtype tag {other}"))),
    }
}

fn read_model<T: Real>(
    cur: &mut Cursor,
    config: ModelConfig,
    vocab: Vocab,
) -> Result<Model<T>, CheckpointError> {
    let count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let mut params: ParamSet<T> = ParamSet::new();
    let width = std::mem::size_of::<T>();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let rows = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let raw = cur.take(rows * cols * width)?;
        let data: Vec<T> = raw
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64)
                } else {
                    T::from_f64(f64::from_le_bytes(c.try_into().unwrap()))
                }
            })
            .collect();
        params.register(name, Shape(rows, cols), data);
    }

    // The stored layout must match what this build constructs for the config.
    let reference: Model<T> = Model::new(config.clone(), vocab.clone(), 0)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if reference.params.layout() != params.layout() {
        return Err(CheckpointError::Layout(
            "tensor names/shapes do not match the architecture for this config".into(),
        ));
    }
    Ok(Model { cfg: config, vocab, params })
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "unexpected end of file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}
