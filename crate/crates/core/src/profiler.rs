//! Closed-form per-layer cost accounting: FLOPs spent locally and raw
//! activation bytes at each cut.
//!
//! One multiply-accumulate counts as 2 FLOPs; bias additions and
//! elementwise operations count one FLOP per element.

use std::io::Write;

use serde::Serialize;

use crate::codec::CodecModel;
use crate::model::{Layer, ModelError, ModelGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerProfile {
    pub layer_index: usize,
    pub flops: u64,
    pub output_elements: u64,
    /// `4 * output_elements` (f32).
    pub raw_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelProfile {
    pub layers: Vec<LayerProfile>,
    pub kinds: Vec<&'static str>,
    /// `cumulative_flops[k] = Σ_{i<k} flops(i)`, length `layer_count + 1`.
    pub cumulative_flops: Vec<u64>,
    /// Raw size of `x_k` in bytes, length `layer_count + 1`.
    pub raw_payload_bytes: Vec<u64>,
}

impl ModelProfile {
    pub fn total_flops(&self) -> u64 {
        *self.cumulative_flops.last().expect("non-empty")
    }

    /// CSV with columns `layer_index,kind,flops,cumulative_flops,raw_bytes`,
    /// where `cumulative_flops` includes the layer itself.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["layer_index", "kind", "flops", "cumulative_flops", "raw_bytes"])?;
        for (p, kind) in self.layers.iter().zip(&self.kinds) {
            w.write_record([
                p.layer_index.to_string(),
                kind.to_string(),
                p.flops.to_string(),
                self.cumulative_flops[p.layer_index + 1].to_string(),
                p.raw_bytes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// FLOPs and output size of `layer` applied to `input_shape`.
/// The returned profile has `layer_index` 0; [`profile_model`] fills it in.
pub fn layer_cost(layer: &Layer, input_shape: &[usize]) -> Result<LayerProfile, ModelError> {
    let out_shape = layer.output_shape(input_shape)?;
    let out_elems: u64 = out_shape.iter().map(|&d| d as u64).product();
    let in_elems: u64 = input_shape.iter().map(|&d| d as u64).product();
    let flops = match layer {
        Layer::Conv2d(c) => {
            let k2 = (c.kernel * c.kernel) as u64;
            2 * out_elems * k2 * c.in_channels as u64 + out_elems
        }
        Layer::DepthwiseConv2d(c) => {
            let k2 = (c.kernel * c.kernel) as u64;
            2 * out_elems * k2 + out_elems
        }
        Layer::Dense(d) => 2 * (d.in_features * d.out_features) as u64 + d.out_features as u64,
        Layer::Affine(_) => 2 * out_elems,
        Layer::Relu6 | Layer::ResidualAdd { .. } => out_elems,
        Layer::GlobalAvgPool => in_elems,
    };
    Ok(LayerProfile { layer_index: 0, flops, output_elements: out_elems, raw_bytes: 4 * out_elems })
}

pub fn profile_model(model: &ModelGraph) -> ModelProfile {
    let mut layers = Vec::with_capacity(model.layer_count());
    let mut cumulative_flops = vec![0u64];
    let mut raw_payload_bytes = vec![];
    for k in 0..=model.layer_count() {
        let shape = model.shape_at(k).expect("k within model");
        raw_payload_bytes.push(4 * shape.iter().map(|&d| d as u64).product::<u64>());
    }
    for (i, layer) in model.layers().iter().enumerate() {
        let input = model.shape_at(i).expect("validated model");
        let mut p = layer_cost(layer, input).expect("validated model composes");
        p.layer_index = i;
        cumulative_flops.push(cumulative_flops[i] + p.flops);
        layers.push(p);
    }
    let kinds = model.layers().iter().map(Layer::kind_name).collect();
    ModelProfile { layers, kinds, cumulative_flops, raw_payload_bytes }
}

/// Client-side encoder cost per tensor: mean subtraction plus projection
/// for every sample of every block. Reported separately from model FLOPs.
pub fn codec_encode_flops(cm: &CodecModel) -> u64 {
    let [_, h, w] = cm.tensor_shape();
    let d = cm.config().block_size as u64;
    let m = cm.config().components as u64;
    let samples = (h * w * cm.blocks().len()) as u64;
    samples * (d + 2 * d * m)
}
