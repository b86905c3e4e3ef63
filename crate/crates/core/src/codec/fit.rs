//! Codec fitting and the `SPLITCDC` v1 file format.
//!
//! ```text
//! magic "SPLITCDC" | version u32 | d u32 | m u32 | b u32 | clip f32
//! shape 3 x u32 | block_count u32
//! per block: mean (u32 n, f32 x n) | basis d×m row-major (u32 n, f32 x n)
//!            | eigenvalues (u32 n, f32 x n)
//! steps, block-major (u32 n, f32 x n) | 2^b code lengths u8 | fnv1a64 u64
//! ```
//!
//! The trailing checksum doubles as the model id carried by every bitstream.

use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::blocks::{block_count, partition_blocks, BlockSamples};
use super::eigen::symmetric_eigendecomposition;
use super::huffman::HuffmanCode;
use super::quant::{quantize, step_size, ZERO_VARIANCE};
use super::{CodecConfig, CodecError};
use crate::fnv::fnv1a64;
use crate::tensor::Tensor;

pub const CODEC_MAGIC: &[u8; 8] = b"SPLITCDC";
pub const CODEC_VERSION: u32 = 1;

/// Fitted PCA basis for one channel block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBasis {
    pub mean: Vec<f32>,
    /// `d × m`, row-major; column `j` is the `j`-th principal direction.
    pub basis: Vec<f32>,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f32>,
    pub steps: Vec<f32>,
}

impl BlockBasis {
    /// Quantizer indices for one centered-and-projected sample.
    pub(crate) fn quantize_sample(&self, sample: &[f64], m: usize, bits: u32, out: &mut Vec<i32>) {
        for j in 0..m {
            if self.eigenvalues[j] <= ZERO_VARIANCE {
                out.push(0);
                continue;
            }
            let mut c = 0.0f64;
            for (i, (&x, &mu)) in sample.iter().zip(&self.mean).enumerate() {
                c += self.basis[i * m + j] as f64 * (x - mu as f64);
            }
            out.push(quantize(c, self.steps[j] as f64, bits));
        }
    }

    pub(crate) fn reconstruct(&self, indices: &[i32], out: &mut [f64]) {
        let m = indices.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.mean[i] as f64;
            for (j, &q) in indices.iter().enumerate() {
                v += self.basis[i * m + j] as f64 * (q as f64 * self.steps[j] as f64);
            }
            *o = v;
        }
    }
}

/// Everything both endpoints need to encode and decode one cut's activations.
#[derive(Debug, Clone)]
pub struct CodecModel {
    config: CodecConfig,
    tensor_shape: [usize; 3],
    blocks: Vec<BlockBasis>,
    code: HuffmanCode,
    model_id: u64,
}

impl CodecModel {
    fn assemble(config: CodecConfig, tensor_shape: [usize; 3], blocks: Vec<BlockBasis>, code: HuffmanCode) -> Self {
        let mut cm = Self { config, tensor_shape, blocks, code, model_id: 0 };
        let body = cm.body_bytes();
        cm.model_id = fnv1a64(&body);
        cm
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn tensor_shape(&self) -> [usize; 3] {
        self.tensor_shape
    }

    pub fn blocks(&self) -> &[BlockBasis] {
        &self.blocks
    }

    pub fn huffman(&self) -> &HuffmanCode {
        &self.code
    }

    pub fn model_id(&self) -> u64 {
        self.model_id
    }

    /// Symbols per encoded tensor: `H·W·blocks·m`.
    pub fn symbols_per_tensor(&self) -> usize {
        let [_, h, w] = self.tensor_shape;
        h * w * self.blocks.len() * self.config.components
    }

    /// Alphabet symbol for a signed quantizer index.
    pub(crate) fn symbol(&self, index: i32) -> usize {
        (index + (1 << (self.config.quant_bits - 1))) as usize
    }

    pub(crate) fn index(&self, symbol: usize) -> i32 {
        symbol as i32 - (1 << (self.config.quant_bits - 1))
    }

    /// Quantizer indices for `x` in (block, spatial, component) order.
    pub(crate) fn indices(&self, samples: &[BlockSamples]) -> Vec<i32> {
        let m = self.config.components;
        let mut out = Vec::with_capacity(samples.first().map_or(0, |s| s.len()) * samples.len() * m);
        for (block, s) in self.blocks.iter().zip(samples) {
            for sample in s.iter() {
                block.quantize_sample(sample, m, self.config.quant_bits, &mut out);
            }
        }
        out
    }

    /// Histogram of calibration symbols with add-one smoothing, as used to
    /// build the Huffman code.
    pub fn smoothed_histogram(&self, calibration: &[Tensor]) -> Result<Vec<u64>, CodecError> {
        let mut counts = vec![1u64; self.config.alphabet_size()];
        for t in calibration {
            self.check_shape(t)?;
            let samples = partition_blocks(t, self.config.block_size);
            for q in self.indices(&samples) {
                counts[self.symbol(q)] += 1;
            }
        }
        Ok(counts)
    }

    pub(crate) fn check_shape(&self, x: &Tensor) -> Result<(), CodecError> {
        if x.shape() != self.tensor_shape {
            return Err(CodecError::ShapeMismatch(format!(
                "tensor {:?}, codec fitted for {:?}",
                x.shape(),
                self.tensor_shape
            )));
        }
        Ok(())
    }

    fn body_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CODEC_MAGIC);
        let mut put = |v: u32| out.write_u32::<LE>(v).unwrap();
        put(CODEC_VERSION);
        put(c.block_size as u32);
        put(c.components as u32);
        put(c.quant_bits);
        out.write_f32::<LE>(c.clip_sigmas).unwrap();
        for &s in &self.tensor_shape {
            out.write_u32::<LE>(s as u32).unwrap();
        }
        out.write_u32::<LE>(self.blocks.len() as u32).unwrap();
        let put_array = |out: &mut Vec<u8>, values: &[f32]| {
            out.write_u32::<LE>(values.len() as u32).unwrap();
            for &v in values {
                out.write_f32::<LE>(v).unwrap();
            }
        };
        for b in &self.blocks {
            put_array(&mut out, &b.mean);
            put_array(&mut out, &b.basis);
            put_array(&mut out, &b.eigenvalues);
        }
        let steps: Vec<f32> = self.blocks.iter().flat_map(|b| b.steps.iter().copied()).collect();
        put_array(&mut out, &steps);
        out.extend_from_slice(self.code.lengths());
        out
    }

    /// Serialized `SPLITCDC` file; the last 8 bytes are the model id.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body_bytes();
        out.write_u64::<LE>(self.model_id).unwrap();
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CodecError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let eof = |_| CodecError::Truncated;
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != CODEC_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != CODEC_VERSION {
            return Err(CodecError::VersionUnsupported(version));
        }
        let block_size = r.read_u32::<LE>().map_err(eof)? as usize;
        let components = r.read_u32::<LE>().map_err(eof)? as usize;
        let quant_bits = r.read_u32::<LE>().map_err(eof)?;
        let clip_sigmas = r.read_f32::<LE>().map_err(eof)?;
        let config = CodecConfig { block_size, components, quant_bits, clip_sigmas };
        config.validate()?;
        let mut tensor_shape = [0usize; 3];
        for s in &mut tensor_shape {
            *s = r.read_u32::<LE>().map_err(eof)? as usize;
        }
        let n_blocks = r.read_u32::<LE>().map_err(eof)? as usize;
        if n_blocks != block_count(tensor_shape[0], block_size) {
            return Err(CodecError::ShapeMismatch(format!(
                "{n_blocks} blocks stored for {} channels",
                tensor_shape[0]
            )));
        }
        let array = |r: &mut &[u8], want: usize| -> Result<Vec<f32>, CodecError> {
            let n = r.read_u32::<LE>().map_err(eof)? as usize;
            if n != want {
                return Err(CodecError::ShapeMismatch(format!("array of {n}, expected {want}")));
            }
            if r.len() < 4 * n {
                return Err(CodecError::Truncated);
            }
            let mut v = vec![0.0f32; n];
            r.read_f32_into::<LE>(&mut v).map_err(eof)?;
            Ok(v)
        };
        let (d, m) = (block_size, components);
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let mean = array(&mut r, d)?;
            let basis = array(&mut r, d * m)?;
            let eigenvalues = array(&mut r, m)?;
            blocks.push(BlockBasis { mean, basis, eigenvalues, steps: Vec::new() });
        }
        let steps = array(&mut r, n_blocks * m)?;
        for (b, chunk) in blocks.iter_mut().zip(steps.chunks(m.max(1))) {
            b.steps = if m == 0 { Vec::new() } else { chunk.to_vec() };
        }
        let alphabet = config.alphabet_size();
        if r.len() < alphabet {
            return Err(CodecError::Truncated);
        }
        let lengths = r[..alphabet].to_vec();
        r = &r[alphabet..];
        let code = HuffmanCode::from_lengths(lengths)?;
        let stored = r.read_u64::<LE>().map_err(eof)?;
        if !r.is_empty() {
            return Err(CodecError::TrailingGarbage);
        }
        let cm = Self::assemble(config, tensor_shape, blocks, code);
        if cm.model_id != stored {
            return Err(CodecError::ChecksumMismatch);
        }
        Ok(cm)
    }
}

pub fn load_codec(path: impl AsRef<Path>) -> Result<CodecModel, CodecError> {
    CodecModel::from_bytes(&std::fs::read(path)?)
}

fn fit_block(samples: &[&BlockSamples], config: &CodecConfig) -> Result<BlockBasis, CodecError> {
    let d = config.block_size;
    let m = config.components;
    let n: usize = samples.iter().map(|s| s.len()).sum();
    let mut mean = vec![0.0f64; d];
    for s in samples {
        for v in s.iter() {
            for (acc, x) in mean.iter_mut().zip(v) {
                *acc += x;
            }
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut cov = vec![0.0f64; d * d];
    for s in samples {
        for v in s.iter() {
            for i in 0..d {
                let ci = v[i] - mean[i];
                for j in i..d {
                    cov[i * d + j] += ci * (v[j] - mean[j]);
                }
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= n as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let eig = symmetric_eigendecomposition(&cov, d)?;
    let eigenvalues: Vec<f32> = eig.values[..m].iter().map(|&l| l.max(0.0) as f32).collect();
    let mut basis = vec![0.0f32; d * m];
    for i in 0..d {
        for j in 0..m {
            basis[i * m + j] = eig.vectors[i * d + j] as f32;
        }
    }
    let steps = eigenvalues.iter().map(|&l| step_size(l, config.clip_sigmas, config.quant_bits)).collect();
    Ok(BlockBasis { mean: mean.iter().map(|&v| v as f32).collect(), basis, eigenvalues, steps })
}

/// Fits per-block means, PCA bases and quantizer steps on `calibration`,
/// then builds the Huffman code from the calibration set's own symbol
/// histogram (add-one smoothed).
pub fn fit_codec(calibration: &[Tensor], config: CodecConfig) -> Result<CodecModel, CodecError> {
    config.validate()?;
    if calibration.len() < 2 {
        return Err(CodecError::EmptyCalibration);
    }
    let shape = calibration[0].shape().to_vec();
    let tensor_shape = match shape.as_slice() {
        &[c, h, w] => [c, h, w],
        _ => return Err(CodecError::ShapeMismatch(format!("codec needs C×H×W activations, got {shape:?}"))),
    };
    if let Some(t) = calibration.iter().find(|t| t.shape() != shape.as_slice()) {
        return Err(CodecError::ShapeMismatch(format!("calibration shapes differ: {shape:?} vs {:?}", t.shape())));
    }

    let per_tensor: Vec<Vec<BlockSamples>> =
        calibration.iter().map(|t| partition_blocks(t, config.block_size)).collect();
    let n_blocks = block_count(tensor_shape[0], config.block_size);
    let fit_one = |b: usize| {
        let samples: Vec<&BlockSamples> = per_tensor.iter().map(|blocks| &blocks[b]).collect();
        fit_block(&samples, &config)
    };
    #[cfg(feature = "parallel")]
    let blocks: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        (0..n_blocks).into_par_iter().map(fit_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let blocks: Result<Vec<_>, _> = (0..n_blocks).map(fit_one).collect();
    let blocks = blocks?;

    // provisional code so the quantizer can run; replaced below
    let uniform = HuffmanCode::from_counts(&vec![1; config.alphabet_size()])?;
    let draft = CodecModel::assemble(config, tensor_shape, blocks, uniform);
    let mut counts = vec![1u64; config.alphabet_size()];
    for samples in &per_tensor {
        for q in draft.indices(samples) {
            counts[draft.symbol(q)] += 1;
        }
    }
    let code = HuffmanCode::from_counts(&counts)?;
    Ok(CodecModel::assemble(config, tensor_shape, draft.blocks, code))
}
