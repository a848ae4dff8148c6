//! Model checkpoints: one line of JSON header, then every layer's weights
//! and bias as little-endian f64.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseParams, ModelParams};
use crate::tensor::Tensor;

pub const FORMAT: &str = "feddual-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub round: usize,
    /// `[out_dim, in_dim]` per dense layer.
    pub layer_shapes: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
}

pub fn encode(params: &ModelParams, config_hash: &str, round: usize) -> Vec<u8> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        config_hash: config_hash.into(),
        round,
        layer_shapes: params
            .layers
            .iter()
            .map(|l| [l.weights.rows(), l.weights.row_len()])
            .collect(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for layer in &params.layers {
        for v in layer.weights.data().iter().chain(layer.bias.data().iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let fmt = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| fmt(0, "missing header terminator".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| fmt(0, format!("bad header: {e}")))?;
    if header.format != FORMAT {
        return Err(fmt(0, format!("unexpected format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Schema(format!(
            "checkpoint version {} (expected {VERSION})",
            header.version
        )));
    }
    let mut pos = nl + 1;
    let mut layers = Vec::with_capacity(header.layer_shapes.len());
    for &[rows, cols] in &header.layer_shapes {
        let mut read = |count: usize| -> Result<Vec<f64>> {
            let end = pos + count * 8;
            if end > bytes.len() {
                return Err(fmt(bytes.len(), format!("truncated: need {end} bytes")));
            }
            let v = bytes[pos..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            pos = end;
            Ok(v)
        };
        let weights = Tensor::new(vec![rows, cols], read(rows * cols)?)?;
        let bias = Tensor::new(vec![rows], read(rows)?)?;
        layers.push(DenseParams { weights, bias });
    }
    if pos != bytes.len() {
        return Err(fmt(pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Checkpoint {
        header,
        params: ModelParams { layers },
    })
}

pub fn save(path: &Path, params: &ModelParams, config_hash: &str, round: usize) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params, config_hash, round))
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
