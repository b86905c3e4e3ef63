//! Wire bitstream for one encoded activation tensor.
//!
//! ```text
//! magic "SPLITBIT" | version u32 | split_k u32 | shape 3 x u32 | model_id u64
//! | payload_bit_count u64 | payload (ceil(bits/8) bytes, MSB-first, zero pad)
//! ```
//!
//! Header integers are little-endian; the header is 44 bytes.

use std::io::Read;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::bits::{BitReader, BitWriter};
use super::blocks::partition_blocks;
use super::{CodecError, CodecModel};
use crate::tensor::Tensor;

pub const BITSTREAM_MAGIC: &[u8; 8] = b"SPLITBIT";
pub const BITSTREAM_VERSION: u32 = 1;
pub const BITSTREAM_HEADER_LEN: usize = 44;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub split_k: u32,
    pub shape: [u32; 3],
    pub model_id: u64,
    pub payload_bit_count: u64,
    pub payload: Vec<u8>,
}

impl Bitstream {
    /// Header plus payload bytes.
    pub fn byte_len(&self) -> usize {
        BITSTREAM_HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.write_u32::<LE>(BITSTREAM_VERSION).unwrap();
        out.write_u32::<LE>(self.split_k).unwrap();
        for &s in &self.shape {
            out.write_u32::<LE>(s).unwrap();
        }
        out.write_u64::<LE>(self.model_id).unwrap();
        out.write_u64::<LE>(self.payload_bit_count).unwrap();
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a bitstream, checking that the payload length matches the
    /// declared bit count and that pad bits are zero.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let eof = |_| CodecError::Truncated;
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != BITSTREAM_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != BITSTREAM_VERSION {
            return Err(CodecError::VersionUnsupported(version));
        }
        let split_k = r.read_u32::<LE>().map_err(eof)?;
        let mut shape = [0u32; 3];
        for s in &mut shape {
            *s = r.read_u32::<LE>().map_err(eof)?;
        }
        let model_id = r.read_u64::<LE>().map_err(eof)?;
        let payload_bit_count = r.read_u64::<LE>().map_err(eof)?;
        let need = payload_bit_count.div_ceil(8);
        if (r.len() as u64) < need {
            return Err(CodecError::Truncated);
        }
        if r.len() as u64 > need {
            return Err(CodecError::TrailingGarbage);
        }
        let used = (payload_bit_count % 8) as u32;
        if used != 0 && r[r.len() - 1] & (0xFFu8 >> used) != 0 {
            return Err(CodecError::TrailingGarbage);
        }
        Ok(Self { split_k, shape, model_id, payload_bit_count, payload: r.to_vec() })
    }
}

/// Projects, quantizes and Huffman-codes `x` (the activation at cut `k`).
pub fn encode(cm: &CodecModel, x: &Tensor, k: usize) -> Result<Bitstream, CodecError> {
    cm.check_shape(x)?;
    let samples = partition_blocks(x, cm.config().block_size);
    let mut w = BitWriter::new();
    for q in cm.indices(&samples) {
        cm.huffman().write_symbol(&mut w, cm.symbol(q));
    }
    let (payload, payload_bit_count) = w.finish();
    let [c, h, wd] = cm.tensor_shape();
    Ok(Bitstream {
        split_k: k as u32,
        shape: [c as u32, h as u32, wd as u32],
        model_id: cm.model_id(),
        payload_bit_count,
        payload,
    })
}

/// Inverse of [`encode`]: Huffman-decodes exactly `H·W·blocks·m` indices,
/// dequantizes and back-projects, then drops channel padding.
pub fn decode(cm: &CodecModel, bs: &Bitstream) -> Result<Tensor, CodecError> {
    if bs.model_id != cm.model_id() {
        return Err(CodecError::ModelMismatch { expected: cm.model_id(), found: bs.model_id });
    }
    let [c, h, w] = cm.tensor_shape();
    if bs.shape != [c as u32, h as u32, w as u32] {
        return Err(CodecError::ShapeMismatch(format!(
            "bitstream shape {:?}, codec shape {:?}",
            bs.shape,
            cm.tensor_shape()
        )));
    }
    if bs.payload.len() as u64 != bs.payload_bit_count.div_ceil(8) {
        return Err(CodecError::CorruptPayload("payload length disagrees with bit count".into()));
    }
    let d = cm.config().block_size;
    let m = cm.config().components;
    let area = h * w;
    let mut reader = BitReader::new(&bs.payload, bs.payload_bit_count);
    let mut out = vec![0.0f32; c * area];
    let mut indices = vec![0i32; m];
    let mut recon = vec![0.0f64; d];
    for (b, block) in cm.blocks().iter().enumerate() {
        for pos in 0..area {
            for q in indices.iter_mut() {
                *q = cm.index(cm.huffman().read_symbol(&mut reader)?);
            }
            block.reconstruct(&indices, &mut recon);
            for (i, &v) in recon.iter().enumerate() {
                let ch = b * d + i;
                if ch < c {
                    out[ch * area + pos] = v as f32;
                }
            }
        }
    }
    if reader.remaining() != 0 {
        return Err(CodecError::TrailingGarbage);
    }
    Tensor::new(vec![c, h, w], out).map_err(|e| CodecError::ShapeMismatch(e.to_string()))
}
