//! `SPLITMDL` v1 model files.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic "SPLITMDL" | version u32 | name_len u16 | name utf-8
//! width_multiplier f32 | input_size u32 | class_count u32 | input shape 3 x u32
//! layer_count u32 | layers... | fnv1a64 u64 (of every preceding byte)
//! ```
//!
//! Each layer is `tag u8 | parameter block | weight_count u64 | f32 x weight_count
//! | bias_count u64 | f32 x bias_count`. Parameter blocks are u32 fields:
//!
//! | tag | kind            | parameters                                  |
//! |-----|-----------------|---------------------------------------------|
//! | 0   | Conv2d          | in, out, kernel, stride, padding            |
//! | 1   | DepthwiseConv2d | channels, kernel, stride, padding           |
//! | 2   | Affine          | channels (weight = scale, bias = shift)     |
//! | 3   | Relu6           | none                                        |
//! | 4   | GlobalAvgPool   | none                                        |
//! | 5   | Dense           | in_features, out_features                   |
//! | 6   | ResidualAdd     | source layer index                          |

use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::layer::{Affine, Conv2d, Dense, DepthwiseConv2d, Layer};
use super::{ModelError, ModelGraph, ModelMetadata};
use crate::fnv::fnv1a64;

pub const MODEL_MAGIC: &[u8; 8] = b"SPLITMDL";
pub const MODEL_VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_DEPTHWISE: u8 = 1;
const TAG_AFFINE: u8 = 2;
const TAG_RELU6: u8 = 3;
const TAG_GAP: u8 = 4;
const TAG_DENSE: u8 = 5;
const TAG_RESIDUAL: u8 = 6;

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelGraph, ModelError> {
    let bytes = std::fs::read(path)?;
    read_model(&bytes)
}

fn eof(_: std::io::Error) -> ModelError {
    ModelError::TruncatedFile
}

fn u32_usize(r: &mut &[u8]) -> Result<usize, ModelError> {
    Ok(r.read_u32::<LE>().map_err(eof)? as usize)
}

fn f32_array(r: &mut &[u8]) -> Result<Vec<f32>, ModelError> {
    let n = r.read_u64::<LE>().map_err(eof)?;
    if n.saturating_mul(4) > r.len() as u64 {
        return Err(ModelError::TruncatedFile);
    }
    let mut v = vec![0.0f32; n as usize];
    r.read_f32_into::<LE>(&mut v).map_err(eof)?;
    Ok(v)
}

pub fn read_model(bytes: &[u8]) -> Result<ModelGraph, ModelError> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.read_u32::<LE>().map_err(eof)?;
    if version != MODEL_VERSION {
        return Err(ModelError::VersionUnsupported(version));
    }
    let name_len = r.read_u16::<LE>().map_err(eof)? as usize;
    if r.len() < name_len {
        return Err(ModelError::TruncatedFile);
    }
    let name = std::str::from_utf8(&r[..name_len])
        .map_err(|_| ModelError::InvalidLayer("model name is not UTF-8".into()))?
        .to_owned();
    r = &r[name_len..];
    let width_multiplier = r.read_f32::<LE>().map_err(eof)?;
    let input_size = r.read_u32::<LE>().map_err(eof)?;
    let class_count = u32_usize(&mut r)?;
    let input_shape = [u32_usize(&mut r)?, u32_usize(&mut r)?, u32_usize(&mut r)?];
    let layer_count = u32_usize(&mut r)?;

    let mut layers = Vec::with_capacity(layer_count.min(4096));
    for _ in 0..layer_count {
        let tag = r.read_u8().map_err(eof)?;
        let layer = match tag {
            TAG_CONV => {
                let (in_channels, out_channels) = (u32_usize(&mut r)?, u32_usize(&mut r)?);
                let (kernel, stride, padding) = (u32_usize(&mut r)?, u32_usize(&mut r)?, u32_usize(&mut r)?);
                let weight = f32_array(&mut r)?;
                let bias = f32_array(&mut r)?;
                Layer::Conv2d(Conv2d { in_channels, out_channels, kernel, stride, padding, weight, bias })
            }
            TAG_DEPTHWISE => {
                let channels = u32_usize(&mut r)?;
                let (kernel, stride, padding) = (u32_usize(&mut r)?, u32_usize(&mut r)?, u32_usize(&mut r)?);
                let weight = f32_array(&mut r)?;
                let bias = f32_array(&mut r)?;
                Layer::DepthwiseConv2d(DepthwiseConv2d { channels, kernel, stride, padding, weight, bias })
            }
            TAG_AFFINE => {
                let channels = u32_usize(&mut r)?;
                let scale = f32_array(&mut r)?;
                let shift = f32_array(&mut r)?;
                if scale.len() != channels {
                    return Err(ModelError::InvalidLayer(format!(
                        "affine declares {channels} channels but has {} scales",
                        scale.len()
                    )));
                }
                Layer::Affine(Affine { scale, shift })
            }
            TAG_DENSE => {
                let (in_features, out_features) = (u32_usize(&mut r)?, u32_usize(&mut r)?);
                let weight = f32_array(&mut r)?;
                let bias = f32_array(&mut r)?;
                Layer::Dense(Dense { in_features, out_features, weight, bias })
            }
            TAG_RELU6 | TAG_GAP | TAG_RESIDUAL => {
                let source = if tag == TAG_RESIDUAL { Some(u32_usize(&mut r)?) } else { None };
                let weight = f32_array(&mut r)?;
                let bias = f32_array(&mut r)?;
                if !weight.is_empty() || !bias.is_empty() {
                    return Err(ModelError::InvalidLayer(format!("layer tag {tag} carries weights")));
                }
                match (tag, source) {
                    (TAG_RELU6, _) => Layer::Relu6,
                    (TAG_GAP, _) => Layer::GlobalAvgPool,
                    (_, Some(source)) => Layer::ResidualAdd { source },
                    _ => unreachable!(),
                }
            }
            other => return Err(ModelError::InvalidLayer(format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }

    let body_len = bytes.len() - r.len();
    let stored = r.read_u64::<LE>().map_err(eof)?;
    let computed = fnv1a64(&bytes[..body_len]);
    if stored != computed {
        return Err(ModelError::ChecksumMismatch { stored, computed });
    }
    if !r.is_empty() {
        return Err(ModelError::InvalidLayer(format!("{} trailing bytes after checksum", r.len())));
    }

    let metadata = ModelMetadata { name, width_multiplier, input_size };
    ModelGraph::new(metadata, input_shape, class_count, layers)
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.write_u64::<LE>(values.len() as u64).unwrap();
    for &v in values {
        out.write_f32::<LE>(v).unwrap();
    }
}

fn put_u32s(out: &mut Vec<u8>, values: &[usize]) {
    for &v in values {
        out.write_u32::<LE>(v as u32).unwrap();
    }
}

/// Serializes `model`, checksum included.
pub fn write_model(model: &ModelGraph) -> Vec<u8> {
    encode(model.metadata(), model.input_shape(), model.class_count(), model.layers())
}

fn encode(meta: &ModelMetadata, input_shape: [usize; 3], class_count: usize, layers: &[Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.write_u32::<LE>(MODEL_VERSION).unwrap();
    out.write_u16::<LE>(meta.name.len() as u16).unwrap();
    out.extend_from_slice(meta.name.as_bytes());
    out.write_f32::<LE>(meta.width_multiplier).unwrap();
    out.write_u32::<LE>(meta.input_size).unwrap();
    put_u32s(&mut out, &[class_count]);
    put_u32s(&mut out, &input_shape);
    put_u32s(&mut out, &[layers.len()]);
    for layer in layers {
        match layer {
            Layer::Conv2d(c) => {
                out.push(TAG_CONV);
                put_u32s(&mut out, &[c.in_channels, c.out_channels, c.kernel, c.stride, c.padding]);
                put_f32s(&mut out, &c.weight);
                put_f32s(&mut out, &c.bias);
            }
            Layer::DepthwiseConv2d(c) => {
                out.push(TAG_DEPTHWISE);
                put_u32s(&mut out, &[c.channels, c.kernel, c.stride, c.padding]);
                put_f32s(&mut out, &c.weight);
                put_f32s(&mut out, &c.bias);
            }
            Layer::Affine(a) => {
                out.push(TAG_AFFINE);
                put_u32s(&mut out, &[a.scale.len()]);
                put_f32s(&mut out, &a.scale);
                put_f32s(&mut out, &a.shift);
            }
            Layer::Dense(d) => {
                out.push(TAG_DENSE);
                put_u32s(&mut out, &[d.in_features, d.out_features]);
                put_f32s(&mut out, &d.weight);
                put_f32s(&mut out, &d.bias);
            }
            Layer::Relu6 | Layer::GlobalAvgPool | Layer::ResidualAdd { .. } => {
                match layer {
                    Layer::Relu6 => out.push(TAG_RELU6),
                    Layer::GlobalAvgPool => out.push(TAG_GAP),
                    Layer::ResidualAdd { source } => {
                        out.push(TAG_RESIDUAL);
                        put_u32s(&mut out, &[*source]);
                    }
                    _ => unreachable!(),
                }
                put_f32s(&mut out, &[]);
                put_f32s(&mut out, &[]);
            }
        }
    }
    let checksum = fnv1a64(&out);
    out.write_u64::<LE>(checksum).unwrap();
    out
}
