//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "LAHACKPT"
//! version  u32
//! hlen     u64      length of the JSON header
//! header   hlen bytes of UTF-8 JSON
//! payload  f64 values of every tensor, in header order
//! digest   32 bytes SHA-256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::trainer::TrainConfig;
use crate::data::Vocabulary;
use crate::fsutil::write_atomic;
use crate::model::{ModelConfig, ModelParams, Variant, PARAM_NAMES};
use crate::numeric::Matrix;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LAHACKPT";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    /// Includes the seed; together with `epoch` it fixes every random stream
    /// of the remaining epochs.
    pub train_config: TrainConfig,
    pub variant: Variant,
    pub epoch: usize,
    pub params: ModelParams,
    pub adam: AdamState,
    pub history: Vec<f64>,
    pub vocabulary: Option<Vocabulary>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamHeader {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    variant: Variant,
    epoch: usize,
    adam: AdamHeader,
    history: Vec<f64>,
    vocabulary: Option<Vocabulary>,
    tensors: Vec<TensorEntry>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors: Vec<(String, &Matrix)> = Vec::new();
    for (name, m) in ckpt.params.tensors() {
        tensors.push((name.to_string(), m));
    }
    for (name, m) in ckpt
        .params
        .tensors()
        .iter()
        .map(|(n, _)| n)
        .zip(&ckpt.adam.m)
    {
        tensors.push((format!("adam.m.{name}"), m));
    }
    for (name, v) in ckpt
        .params
        .tensors()
        .iter()
        .map(|(n, _)| n)
        .zip(&ckpt.adam.v)
    {
        tensors.push((format!("adam.v.{name}"), v));
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        model_config: ckpt.model_config.clone(),
        train_config: ckpt.train_config.clone(),
        variant: ckpt.variant,
        epoch: ckpt.epoch,
        adam: AdamHeader {
            step: ckpt.adam.step,
            beta1: ckpt.adam.beta1,
            beta2: ckpt.adam.beta2,
            eps: ckpt.adam.eps,
        },
        history: ckpt.history.clone(),
        vocabulary: ckpt.vocabulary.clone(),
        tensors: tensors
            .iter()
            .map(|(name, m)| TensorEntry {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| format_err(e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, m) in &tensors {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 8 + DIGEST_LEN || &bytes[..8] != MAGIC {
        return Err(format_err("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::IncompatibleCheckpoint(format!(
            "file has format version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(format_err(
            "checksum mismatch (file truncated or corrupted)",
        ));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| format_err("header length exceeds file"))?;
    let header: Header =
        serde_json::from_slice(&body[20..header_end]).map_err(|e| format_err(e.to_string()))?;
    if header.version != version {
        return Err(format_err("header version disagrees with preamble"));
    }

    let mut payload = &body[header_end..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let len = entry.rows * entry.cols * 8;
        if payload.len() < len {
            return Err(format_err(format!(
                "payload ends inside tensor {}",
                entry.name
            )));
        }
        let (chunk, rest) = payload.split_at(len);
        payload = rest;
        let data: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Matrix::new(entry.rows, entry.cols, data)?);
    }
    if !payload.is_empty() {
        return Err(format_err("trailing bytes after declared tensors"));
    }

    let n = PARAM_NAMES.len();
    if tensors.len() != 3 * n {
        return Err(format_err(format!(
            "expected {} tensors, header declares {}",
            3 * n,
            tensors.len()
        )));
    }
    let v = tensors.split_off(2 * n);
    let m = tensors.split_off(n);
    let params = ModelParams::from_tensors(tensors)?;
    let names: Vec<&str> = header.tensors[..n]
        .iter()
        .map(|e| e.name.as_str())
        .collect();
    let expected: Vec<&str> = params.tensors().iter().map(|(n, _)| *n).collect();
    if names != expected {
        return Err(format_err(format!("unexpected tensor order {names:?}")));
    }
    params.validate(&header.model_config).map_err(|e| {
        Error::IncompatibleCheckpoint(format!("parameters do not match stored config: {e}"))
    })?;
    if let Some(vocab) = &header.vocabulary {
        if vocab.len() != params.vocab_size() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "vocabulary has {} tokens, embedding table has {} rows",
                vocab.len(),
                params.vocab_size()
            )));
        }
    }
    Ok(Checkpoint {
        model_config: header.model_config,
        train_config: header.train_config,
        variant: header.variant,
        epoch: header.epoch,
        params,
        adam: AdamState {
            m,
            v,
            step: header.adam.step,
            beta1: header.adam.beta1,
            beta2: header.adam.beta2,
            eps: header.adam.eps,
        },
        history: header.history,
        vocabulary: header.vocabulary,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &write_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
