//! Deterministic CNN runtime whose forward pass can be cut at any layer
//! boundary outside a residual span.

mod format;
mod graph;
pub mod layer;

pub use format::{load_model, read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use graph::{ModelGraph, ModelMetadata, SplitPlan};
pub use layer::{Affine, Conv2d, Dense, DepthwiseConv2d, Layer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad magic: expected SPLITMDL")]
    BadMagic,
    #[error("unsupported model version {0}")]
    VersionUnsupported(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("truncated model file")]
    TruncatedFile,
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("split point {0} is out of range or inside a residual span")]
    InvalidCut(usize),
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
