//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! The fixture model and dataset are compiled in; every export returns a
//! JSON string or throws a `JsError`.

use std::sync::OnceLock;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use splitinfer::codec::{decode, encode, CodecConfig};
use splitinfer::harness::{calibrate, Dataset};
use splitinfer::model::{read_model, ModelGraph, SplitPlan};
use splitinfer::planner::{frontier_mask, read_points_csv};
use splitinfer::profiler::profile_model;

static MODEL_BYTES: &[u8] = include_bytes!("../../core/fixtures/toy10.model");
static DATA_BYTES: &[u8] = include_bytes!("../../core/fixtures/toy10.data");

const CALIBRATION_IMAGES: usize = 100;

struct Fixture {
    model: ModelGraph,
    data: Dataset,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| Fixture {
        model: read_model(MODEL_BYTES).expect("embedded model is valid"),
        data: Dataset::from_bytes(DATA_BYTES).expect("embedded dataset is valid"),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct ProfileRow {
    layer: usize,
    kind: &'static str,
    flops: u64,
    cumulative_flops: u64,
    raw_bytes: u64,
    valid_cut: bool,
    codec_cut: bool,
}

/// Per-layer cost table of the embedded model.
#[wasm_bindgen]
pub fn profile() -> Result<String, JsError> {
    let f = fixture();
    let p = profile_model(&f.model);
    let valid = f.model.valid_cuts();
    let codec = f.model.codec_cuts();
    let rows: Vec<ProfileRow> = p
        .layers
        .iter()
        .zip(&p.kinds)
        .map(|(l, &kind)| ProfileRow {
            layer: l.layer_index,
            kind,
            flops: l.flops,
            cumulative_flops: p.cumulative_flops[l.layer_index + 1],
            raw_bytes: l.raw_bytes,
            valid_cut: valid.contains(&(l.layer_index + 1)),
            codec_cut: codec.contains(&(l.layer_index + 1)),
        })
        .collect();
    to_json(&rows)
}

/// Number of images in the embedded dataset.
#[wasm_bindgen]
pub fn image_count() -> usize {
    fixture().data.len()
}

/// The image as row-major pixel values in [0, 1].
#[wasm_bindgen]
pub fn image_pixels(index: usize) -> Result<Vec<f32>, JsError> {
    let f = fixture();
    if index >= f.data.len() {
        return Err(JsError::new("image index out of range"));
    }
    Ok(f.data.image(index).data().to_vec())
}

#[derive(Serialize)]
struct SplitResult {
    k: usize,
    label: u32,
    full_prediction: usize,
    split_prediction: usize,
    raw_bytes: usize,
    bitstream_bytes: usize,
    relative_error: f64,
    local_flops: u64,
    logits: Vec<f32>,
}

/// Fits a codec at cut `k` on calibration images, then runs image `index`
/// through prefix, encode, decode and suffix.
#[wasm_bindgen]
pub fn split_image(index: usize, k: usize, d: usize, m: usize, b: u32, clip: f32) -> Result<String, JsError> {
    let f = fixture();
    if index >= f.data.len() {
        return Err(JsError::new("image index out of range"));
    }
    let config = CodecConfig::new(d, m, b).with_clip(clip);
    let cal: Vec<usize> = f.data.split().calibration.into_iter().take(CALIBRATION_IMAGES).collect();
    let (images, _) = f.data.select(&cal);
    let cm = calibrate(&f.model, &images, k, config).map_err(js)?;

    let plan = SplitPlan::new(&f.model, k).map_err(js)?;
    let x = f.data.image(index);
    let x_k = f.model.forward_prefix(x, plan).map_err(js)?;
    let bs = encode(&cm, &x_k, k).map_err(js)?;
    let restored = decode(&cm, &bs).map_err(js)?;
    let logits = f.model.forward_suffix(&restored, plan).map_err(js)?;
    let full = f.model.forward(x).map_err(js)?;

    let num: f64 = x_k.data().iter().zip(restored.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
    let den: f64 = x_k.data().iter().map(|&a| (a as f64).powi(2)).sum();
    to_json(&SplitResult {
        k,
        label: f.data.label(index),
        full_prediction: full.argmax(),
        split_prediction: logits.argmax(),
        raw_bytes: x_k.raw_bytes(),
        bitstream_bytes: bs.byte_len(),
        relative_error: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
        local_flops: profile_model(&f.model).cumulative_flops[k],
        logits: logits.data().to_vec(),
    })
}

/// Frontier flags for the trade-off points in a CSV with columns
/// `k,d,m,b,clip,local_flops,mean_payload_bytes,top1_accuracy`.
#[wasm_bindgen]
pub fn frontier(csv: &str) -> Result<String, JsError> {
    let points = read_points_csv(csv.as_bytes()).map_err(js)?;
    let mask = frontier_mask(&points).map_err(js)?;
    #[derive(Serialize)]
    struct Row<'a> {
        #[serde(flatten)]
        point: &'a splitinfer::planner::TradeoffPoint,
        on_frontier: bool,
    }
    let rows: Vec<Row> = points.iter().zip(mask).map(|(point, on_frontier)| Row { point, on_frontier }).collect();
    to_json(&rows)
}
