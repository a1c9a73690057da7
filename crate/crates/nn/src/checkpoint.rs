//! Checkpoint container: 8-byte magic, little-endian `u64` header length,
//! a JSON header describing the model and every parameter block, then the
//! blocks as little-endian `f32`.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};
use xprojct_core::Scalar;

use crate::error::{NnError, Result};
use crate::layer::{LayerParams, LayerSpec};
use crate::model::{Model, ModelSpec};

pub const MAGIC: &[u8; 8] = b"XPRJCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    pub offset: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn weight_shape(spec: &LayerSpec) -> Vec<usize> {
    match *spec {
        LayerSpec::Conv2d { in_channels, out_channels, kernel } => vec![out_channels, in_channels, kernel, kernel],
        LayerSpec::Conv3d { in_channels, out_channels, kernel } => {
            vec![out_channels, in_channels, kernel, kernel, kernel]
        }
        LayerSpec::Shrink2p5d { size } => vec![3, size],
        LayerSpec::Dense { inputs, outputs } => vec![outputs, inputs],
        _ => vec![],
    }
}

pub fn encode_checkpoint<S: Scalar>(model: &Model<S>, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    for (l, (spec, p)) in model.spec().layers.iter().zip(model.params()).enumerate() {
        if p.is_empty() {
            continue;
        }
        for (name, values, shape) in [
            ("weight", &p.weight, weight_shape(spec)),
            ("bias", &p.bias, vec![p.bias.len()]),
        ] {
            tensors.push(TensorEntry {
                layer: l,
                name: name.to_string(),
                shape,
                offset: data.len(),
                count: values.len(),
            });
            for v in values {
                data.extend_from_slice(&v.to_f32_le());
            }
        }
    }
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        spec: model.spec().clone(),
        tensors,
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn decode_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<(Model<S>, CheckpointHeader)> {
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let hlen = LittleEndian::read_u64(&bytes[8..16]) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(bad("header length exceeds file size"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])?;
    if header.format_version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.format_version
        )));
    }
    let data = &body[hlen..];
    let mut params: Vec<LayerParams<S>> = header.spec.layers.iter().map(LayerParams::zeros_like).collect();
    let mut seen = 0usize;
    for t in &header.tensors {
        let target = params
            .get_mut(t.layer)
            .ok_or_else(|| bad("tensor refers to a missing layer"))?;
        let slot = match t.name.as_str() {
            "weight" => &mut target.weight,
            "bias" => &mut target.bias,
            _ => return Err(NnError::Checkpoint(format!("unknown tensor {:?}", t.name))),
        };
        let end = t.offset + 4 * t.count;
        if slot.len() != t.count || t.shape.iter().product::<usize>() != t.count || end > data.len() {
            return Err(NnError::Checkpoint(format!(
                "tensor {} of layer {} does not fit the model or the file",
                t.name, t.layer
            )));
        }
        for (i, v) in slot.iter_mut().enumerate() {
            *v = S::of(LittleEndian::read_f32(&data[t.offset + 4 * i..]) as f64);
        }
        seen += t.count;
    }
    let model = Model::from_params(header.spec.clone(), params)?;
    if seen != model.parameter_count() {
        return Err(bad("checkpoint does not cover every parameter"));
    }
    Ok((model, header))
}

pub fn save_checkpoint<S: Scalar>(model: &Model<S>, metadata: serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, metadata)?;
    xprojct_core::io_util::write_atomic(path, &bytes).map_err(|e| NnError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<(Model<S>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| NnError::io(path, e))?;
    decode_checkpoint(&bytes)
}
