//! Blocked-PCA activation codec: per-block projection onto the leading
//! principal components, uniform scalar quantization, canonical Huffman
//! coding of the quantizer indices.

mod bits;
mod blocks;
pub mod eigen;
mod fit;
pub mod huffman;
mod quant;
mod stream;

pub use bits::{BitReader, BitWriter};
pub use blocks::{partition_blocks, BlockSamples};
pub use eigen::{symmetric_eigendecomposition, SymmetricEigen};
pub use fit::{fit_codec, load_codec, BlockBasis, CodecModel, CODEC_MAGIC, CODEC_VERSION};
pub use huffman::{build_huffman, HuffmanCode};
pub use quant::{dequantize, quantize, step_size, ZERO_VARIANCE};
pub use stream::{decode, encode, Bitstream, BITSTREAM_HEADER_LEN, BITSTREAM_MAGIC, BITSTREAM_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid codec config: {0}")]
    InvalidConfig(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("calibration needs at least two tensors")]
    EmptyCalibration,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("codec model mismatch: bitstream carries {found:016x}, codec is {expected:016x}")]
    ModelMismatch { expected: u64, found: u64 },
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("trailing garbage after payload")]
    TrailingGarbage,
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    VersionUnsupported(u32),
    #[error("truncated input")]
    Truncated,
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Codec knobs. Serialized with the short names `d`, `m`, `b`, `clip` used
/// in grid files and reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Channels per block.
    #[serde(rename = "d")]
    pub block_size: usize,
    /// Principal components kept per block.
    #[serde(rename = "m")]
    pub components: usize,
    /// Quantizer bit depth; the index alphabet has `2^b` symbols.
    #[serde(rename = "b")]
    pub quant_bits: u32,
    /// Quantizer range in standard deviations on each side of zero.
    #[serde(rename = "clip", default = "default_clip")]
    pub clip_sigmas: f32,
}

fn default_clip() -> f32 {
    4.0
}

impl CodecConfig {
    pub const MAX_BLOCK: usize = 64;

    pub fn new(block_size: usize, components: usize, quant_bits: u32) -> Self {
        Self { block_size, components, quant_bits, clip_sigmas: default_clip() }
    }

    pub fn with_clip(mut self, clip_sigmas: f32) -> Self {
        self.clip_sigmas = clip_sigmas;
        self
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.block_size == 0 || self.block_size > Self::MAX_BLOCK {
            return Err(CodecError::InvalidConfig(format!(
                "block size {} outside 1..={}",
                self.block_size,
                Self::MAX_BLOCK
            )));
        }
        if self.components > self.block_size {
            return Err(CodecError::InvalidConfig(format!(
                "{} components exceed block size {}",
                self.components, self.block_size
            )));
        }
        if !(2..=16).contains(&self.quant_bits) {
            return Err(CodecError::InvalidConfig(format!("quant bits {} outside 2..=16", self.quant_bits)));
        }
        if !(self.clip_sigmas.is_finite() && self.clip_sigmas > 0.0) {
            return Err(CodecError::InvalidConfig(format!("clip {} must be positive", self.clip_sigmas)));
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        1 << self.quant_bits
    }
}
