#![allow(dead_code)]

use std::path::PathBuf;

use serde::Deserialize;

use splitinfer::harness::{load_dataset, Dataset};
use splitinfer::model::{load_model, ModelGraph};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn toy_model() -> ModelGraph {
    load_model(fixture("toy10.model")).expect("toy10.model loads")
}

pub fn toy_data() -> Dataset {
    load_dataset(fixture("toy10.data")).expect("toy10.data loads")
}

#[derive(Debug, Deserialize)]
pub struct ReferenceLogits {
    pub index: usize,
    pub logits: Vec<f32>,
}

#[derive(Debug, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub width_multiplier: f32,
    pub input_size: u32,
    pub class_count: usize,
    pub model_fnv1a64: String,
    pub dataset_fnv1a64: String,
    pub dataset_count: usize,
    pub test_count: usize,
    pub baseline_top1: f64,
    pub layer_input_shapes: Vec<Vec<usize>>,
    pub first_test_index: usize,
    pub first_test_label: u32,
    pub first_test_prediction: usize,
    pub reference_logits: Vec<ReferenceLogits>,
}

pub fn manifest() -> Manifest {
    serde_json::from_slice(&std::fs::read(fixture("manifest.json")).unwrap()).unwrap()
}
