//! On-disk model format.
//!
//! A model file is a single-line compact JSON header terminated by `\n`,
//! followed by a little-endian `f32` weight blob. Every `weights_ref` and
//! `bias_ref` is an `[offset, length]` pair counted in `f32` elements from the
//! start of the blob. The canonical writer lays tensors out in layer order,
//! weights before bias.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Conv2d, Dense, Layer, ModelSpec};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    input_shape: [usize; 3],
    class_count: usize,
    tap_index: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum LayerEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        weights_ref: [usize; 2],
        bias_ref: [usize; 2],
    },
    Relu,
    Maxpool2d {
        window: usize,
        stride: usize,
    },
    Globalavgpool,
    Dense {
        inputs: usize,
        outputs: usize,
        weights_ref: [usize; 2],
        bias_ref: [usize; 2],
    },
    Softmax,
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_model(&bytes)
}

pub fn save_model(model: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_model(model)).map_err(|e| Error::io(path, e))
}

/// SHA-256 hex digest of the canonical serialization.
pub fn model_hash(model: &ModelSpec) -> String {
    hex::encode(Sha256::digest(serialize_model(model)))
}

pub fn serialize_model(model: &ModelSpec) -> Vec<u8> {
    let mut blob: Vec<f64> = Vec::new();
    let mut push = |values: &[f64]| {
        let r = [blob.len(), values.len()];
        blob.extend_from_slice(values);
        r
    };
    let layers = model
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Conv2d(c) => LayerEntry::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                weights_ref: push(&c.weights),
                bias_ref: push(&c.bias),
            },
            Layer::Relu => LayerEntry::Relu,
            Layer::MaxPool2d { window, stride } => LayerEntry::Maxpool2d {
                window: *window,
                stride: *stride,
            },
            Layer::GlobalAvgPool => LayerEntry::Globalavgpool,
            Layer::Dense(d) => LayerEntry::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weights_ref: push(&d.weights),
                bias_ref: push(&d.bias),
            },
            Layer::Softmax => LayerEntry::Softmax,
        })
        .collect();
    let header = Header {
        version: FORMAT_VERSION,
        input_shape: model.input_shape,
        class_count: model.class_count,
        tap_index: model.tap_index,
        layers,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for v in blob {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn parse_model(bytes: &[u8]) -> Result<ModelSpec> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            message: "missing newline terminating the JSON header".into(),
        })?;
    let header: Header = serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::Parse {
        offset: json_error_offset(&bytes[..newline], &e),
        message: e.to_string(),
    })?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Parse {
            offset: 0,
            message: format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.version
            ),
        });
    }
    let blob_start = newline + 1;
    let raw = &bytes[blob_start..];
    if !raw.len().is_multiple_of(4) {
        return Err(Error::Parse {
            offset: bytes.len() - raw.len() % 4,
            message: "weight blob length is not a multiple of 4".into(),
        });
    }
    let blob: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let slice = |r: [usize; 2]| -> Result<Vec<f64>> {
        let [offset, len] = r;
        match offset.checked_add(len) {
            Some(end) if end <= blob.len() => Ok(blob[offset..end].to_vec()),
            _ => Err(Error::Parse {
                offset: blob_start + offset.saturating_mul(4).min(raw.len()),
                message: format!(
                    "reference [{offset}, {len}] exceeds weight blob of {} floats",
                    blob.len()
                ),
            }),
        }
    };
    let mut layers = Vec::with_capacity(header.layers.len());
    for entry in header.layers {
        layers.push(match entry {
            LayerEntry::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights_ref,
                bias_ref,
            } => Layer::Conv2d(Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights: slice(weights_ref)?,
                bias: slice(bias_ref)?,
            }),
            LayerEntry::Relu => Layer::Relu,
            LayerEntry::Maxpool2d { window, stride } => Layer::MaxPool2d { window, stride },
            LayerEntry::Globalavgpool => Layer::GlobalAvgPool,
            LayerEntry::Dense {
                inputs,
                outputs,
                weights_ref,
                bias_ref,
            } => Layer::Dense(Dense {
                inputs,
                outputs,
                weights: slice(weights_ref)?,
                bias: slice(bias_ref)?,
            }),
            LayerEntry::Softmax => Layer::Softmax,
        });
    }
    let model = ModelSpec::new(header.input_shape, layers, Some(header.tap_index))?;
    if model.class_count != header.class_count {
        let last = model.layers.len() - 1;
        return Err(Error::Validation {
            layer: last,
            kind: model.layers[last].kind(),
            message: format!(
                "header declares {} classes, layers produce {}",
                header.class_count, model.class_count
            ),
        });
    }
    Ok(model)
}

/// serde_json reports 1-based line/column; convert to a byte offset.
fn json_error_offset(header: &[u8], err: &serde_json::Error) -> usize {
    let line_start: usize = header
        .split(|&b| b == b'\n')
        .take(err.line().saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum();
    (line_start + err.column().saturating_sub(1)).min(header.len())
}
