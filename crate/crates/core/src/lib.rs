//! Split inference for small CNNs: run a prefix of the network locally,
//! compress the intermediate activation with blocked PCA, scalar
//! quantization and canonical Huffman coding, send it, and finish the
//! forward pass remotely.
//!
//! Modules:
//! - [`model`]: deterministic layer-chain runtime with `forward_prefix` / `forward_suffix`
//! - [`codec`]: the activation codec and its bitstream
//! - [`profiler`]: closed-form FLOP and byte accounting per layer
//! - [`planner`]: Pareto frontier and constrained split selection
//! - [`harness`]: datasets, calibration, evaluation sweeps and reports
//! - [`transport`]: length-prefixed TCP client/server for the remote half

pub mod codec;
mod fnv;
pub mod harness;
pub mod model;
pub mod planner;
pub mod profiler;
pub mod tensor;
pub mod transport;

pub use fnv::fnv1a64;
pub use tensor::Tensor;
