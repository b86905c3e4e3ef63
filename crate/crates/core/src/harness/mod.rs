//! Experiment driver: fit codecs at a cut, evaluate split configurations on
//! the held-out images, sweep (cut × codec) grids and write reports.

mod dataset;
mod report;

pub use dataset::{is_test_index, load_dataset, Dataset, DatasetSplit, DATASET_MAGIC, DATASET_VERSION};
pub use report::{
    best_within_loss, emit_report, load_points, Baseline, Provenance, ReportFormat, ReportPoint, SweepGrid, SweepReport,
};

use thiserror::Error;

use crate::codec::{decode, encode, fit_codec, CodecConfig, CodecError, CodecModel};
use crate::model::{ModelError, ModelGraph, SplitPlan};
use crate::planner::{frontier_mask, PlanError, TradeoffPoint};
use crate::profiler::profile_model;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("cut {0} cannot carry a compressed activation")]
    InvalidCut(usize),
    #[error("format error: {0}")]
    Format(String),
    #[error("empty sweep grid")]
    EmptyGrid,
    #[error("report has no points")]
    EmptyReport,
    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Count the returned logits as payload when the whole model runs
    /// locally (`k == layer_count`).
    pub count_terminal_payload: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { count_terminal_payload: true }
    }
}

/// Logits and on-the-wire size for one image through the split pipeline.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub logits: Tensor,
    pub payload_bytes: usize,
}

/// `forward_prefix → (encode → decode) → forward_suffix` for one image.
/// Without a codec the activation is passed through untouched and counted
/// at 4 bytes per element.
pub fn split_pipeline(
    model: &ModelGraph,
    image: &Tensor,
    plan: SplitPlan,
    codec: Option<&CodecModel>,
) -> Result<PipelineOutput, HarnessError> {
    let x_k = model.forward_prefix(image, plan)?;
    match codec {
        Some(cm) => {
            let bs = encode(cm, &x_k, plan.k())?;
            let payload_bytes = bs.byte_len();
            let restored = decode(cm, &bs)?;
            let logits = model.forward_suffix(&restored, plan)?;
            Ok(PipelineOutput { logits, payload_bytes })
        }
        None => {
            let payload_bytes = x_k.raw_bytes();
            let logits = model.forward_suffix(&x_k, plan)?;
            Ok(PipelineOutput { logits, payload_bytes })
        }
    }
}

fn codec_plan(model: &ModelGraph, k: usize) -> Result<SplitPlan, HarnessError> {
    if k == 0 || k >= model.layer_count() {
        return Err(HarnessError::InvalidCut(k));
    }
    let plan = SplitPlan::new(model, k).map_err(|_| HarnessError::InvalidCut(k))?;
    match model.shape_at(k) {
        Some(s) if s.len() == 3 => Ok(plan),
        _ => Err(HarnessError::InvalidCut(k)),
    }
}

#[cfg(feature = "parallel")]
fn map_images<T, F>(images: &[Tensor], f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(&Tensor) -> Result<T, HarnessError> + Sync + Send,
{
    use rayon::prelude::*;
    images.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_images<T, F>(images: &[Tensor], f: F) -> Result<Vec<T>, HarnessError>
where
    F: Fn(&Tensor) -> Result<T, HarnessError>,
{
    images.iter().map(f).collect()
}

/// `x_k` for every calibration image, checking that `k` can carry a codec.
pub fn calibration_activations(
    model: &ModelGraph,
    calibration: &[Tensor],
    k: usize,
) -> Result<Vec<Tensor>, HarnessError> {
    let plan = codec_plan(model, k)?;
    map_images(calibration, |x| Ok(model.forward_prefix(x, plan)?))
}

/// Fits a codec on the activations at cut `k` of the calibration images.
pub fn calibrate(
    model: &ModelGraph,
    calibration: &[Tensor],
    k: usize,
    config: CodecConfig,
) -> Result<CodecModel, HarnessError> {
    let activations = calibration_activations(model, calibration, k)?;
    Ok(fit_codec(&activations, config)?)
}

/// Runs every test image through the split pipeline and summarizes cost
/// and top-1 accuracy as one trade-off point.
pub fn evaluate_split(
    model: &ModelGraph,
    images: &[Tensor],
    labels: &[u32],
    k: usize,
    codec: Option<&CodecModel>,
    options: &EvalOptions,
) -> Result<TradeoffPoint, HarnessError> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(HarnessError::Format(format!("{} test images for {} labels", images.len(), labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l as usize >= model.class_count()) {
        return Err(HarnessError::LabelOutOfRange { label, classes: model.class_count() });
    }
    let plan = match codec {
        Some(_) => codec_plan(model, k)?,
        None => SplitPlan::new(model, k)?,
    };
    if let Some(cm) = codec {
        let expected = model.shape_at(k).expect("plan validated");
        if cm.tensor_shape() != expected {
            return Err(CodecError::ShapeMismatch(format!(
                "codec fitted for {:?}, x_{k} is {expected:?}",
                cm.tensor_shape()
            ))
            .into());
        }
    }
    let outputs = map_images(images, |x| split_pipeline(model, x, plan, codec))?;
    let correct = outputs.iter().zip(labels).filter(|(o, &l)| o.logits.argmax() == l as usize).count();
    let terminal = k == model.layer_count() && codec.is_none() && !options.count_terminal_payload;
    let total_bytes: usize = if terminal { 0 } else { outputs.iter().map(|o| o.payload_bytes).sum() };
    let profile = profile_model(model);
    Ok(TradeoffPoint {
        k,
        codec: codec.map(|c| *c.config()),
        local_flops: profile.cumulative_flops[k],
        mean_payload_bytes: total_bytes as f64 / images.len() as f64,
        top1_accuracy: correct as f64 / images.len() as f64,
    })
}

/// Full-model top-1 accuracy on `images`.
pub fn model_accuracy(model: &ModelGraph, images: &[Tensor], labels: &[u32]) -> Result<f64, HarnessError> {
    let preds = map_images(images, |x| Ok(model.forward(x)?.argmax()))?;
    let correct = preds.iter().zip(labels).filter(|(&p, &l)| p == l as usize).count();
    Ok(correct as f64 / images.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Calibration images used per fit (first N of the calibration split).
    pub calibration_limit: usize,
    pub eval: EvalOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { calibration_limit: 200, eval: EvalOptions::default() }
    }
}

/// Calibrates and evaluates every `(k, config)` cell plus the raw point of
/// every `k`. Points are ordered by `k`, raw first, then grid order.
pub fn sweep(
    model: &ModelGraph,
    dataset: &Dataset,
    k_list: &[usize],
    grid: &SweepGrid,
    options: &SweepOptions,
) -> Result<SweepReport, HarnessError> {
    sweep_with(model, dataset, k_list, grid, options, |_, _, _| {})
}

/// [`sweep`] that also hands every fitted codec, with the calibration
/// activations it was fitted on, to `inspect`. Calls may come from several
/// threads in any order.
pub fn sweep_with<F>(
    model: &ModelGraph,
    dataset: &Dataset,
    k_list: &[usize],
    grid: &SweepGrid,
    options: &SweepOptions,
    inspect: F,
) -> Result<SweepReport, HarnessError>
where
    F: Fn(usize, &CodecModel, &[Tensor]) + Sync,
{
    if k_list.is_empty() || grid.configs.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    for c in &grid.configs {
        c.validate()?;
    }
    let split = dataset.split();
    let cal_idx: Vec<usize> = split.calibration.iter().copied().take(options.calibration_limit).collect();
    let (cal_images, _) = dataset.select(&cal_idx);
    let (test_images, test_labels) = dataset.select(&split.test);

    // activations are shared by all configs at the same cut
    let activations: Vec<Vec<Tensor>> =
        k_list.iter().map(|&k| calibration_activations(model, &cal_images, k)).collect::<Result<_, _>>()?;
    let cells: Vec<(usize, Option<CodecConfig>)> = k_list
        .iter()
        .flat_map(|&k| std::iter::once((k, None)).chain(grid.configs.iter().map(move |&c| (k, Some(c)))))
        .collect();
    let run_cell = |&(k, config): &(usize, Option<CodecConfig>)| -> Result<TradeoffPoint, HarnessError> {
        match config {
            None => evaluate_split(model, &test_images, &test_labels, k, None, &options.eval),
            Some(c) => {
                let slot = k_list.iter().position(|&j| j == k).expect("k from k_list");
                let cm = fit_codec(&activations[slot], c)?;
                inspect(k, &cm, &activations[slot]);
                evaluate_split(model, &test_images, &test_labels, k, Some(&cm), &options.eval)
            }
        }
    };
    #[cfg(feature = "parallel")]
    let points: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        cells.par_iter().map(run_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let points: Result<Vec<_>, _> = cells.iter().map(run_cell).collect();
    let points = points?;

    let mask = frontier_mask(&points)?;
    let points = points.into_iter().zip(mask).map(|(point, on_frontier)| ReportPoint { point, on_frontier }).collect();
    let timestamp_unix =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(SweepReport {
        points,
        baseline: grid.baseline,
        provenance: Provenance {
            model_name: model.metadata().name.clone(),
            dataset_hash: format!("{:016x}", dataset.checksum()),
            k_list: k_list.to_vec(),
            grid: grid.configs.clone(),
            calibration_images: cal_idx.len(),
            test_images: split.test.len(),
            timestamp_unix,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Affine, Conv2d, Dense, Layer, ModelMetadata};

    fn toy() -> ModelGraph {
        let layers = vec![
            Layer::Conv2d(Conv2d {
                in_channels: 1,
                out_channels: 3,
                kernel: 1,
                stride: 1,
                padding: 0,
                weight: vec![1.0, -1.0, 0.5],
                bias: vec![0.0, 0.0, 0.1],
            }),
            Layer::Affine(Affine { scale: vec![1.0; 3], shift: vec![0.0; 3] }),
            Layer::GlobalAvgPool,
            Layer::Dense(Dense {
                in_features: 3,
                out_features: 2,
                weight: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                bias: vec![0.0; 2],
            }),
        ];
        let meta = ModelMetadata { name: "toy".into(), width_multiplier: 1.0, input_size: 2 };
        ModelGraph::new(meta, [1, 2, 2], 2, layers).unwrap()
    }

    fn images(n: usize) -> (Vec<Tensor>, Vec<u32>) {
        (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                let x = Tensor::new(vec![1, 2, 2], (0..4).map(|j| s * (1.0 + (i + j) as f32 * 0.1)).collect()).unwrap();
                (x, (i % 2) as u32)
            })
            .unzip()
    }

    #[test]
    fn calibrate_rejects_unusable_cuts() {
        let m = toy();
        let (x, _) = images(4);
        let c = CodecConfig::new(2, 1, 4);
        assert!(matches!(calibrate(&m, &x, 0, c), Err(HarnessError::InvalidCut(0))));
        assert!(matches!(calibrate(&m, &x, 3, c), Err(HarnessError::InvalidCut(3))));
        assert!(matches!(calibrate(&m, &x, 4, c), Err(HarnessError::InvalidCut(4))));
        assert!(calibrate(&m, &x, 1, c).is_ok());
    }

    #[test]
    fn identical_calibration_images_give_zero_variance() {
        let m = toy();
        let flat = Tensor::new(vec![1, 2, 2], vec![0.7; 4]).unwrap();
        let cm = calibrate(&m, &[flat.clone(), flat], 2, CodecConfig::new(3, 2, 4)).unwrap();
        assert!(cm.blocks().iter().all(|b| b.eigenvalues.iter().all(|&l| l == 0.0)));
    }

    #[test]
    fn raw_path_matches_full_model() {
        let m = toy();
        let (x, y) = images(10);
        let full = model_accuracy(&m, &x, &y).unwrap();
        for k in m.valid_cuts() {
            let p = evaluate_split(&m, &x, &y, k, None, &EvalOptions::default()).unwrap();
            assert_eq!(p.top1_accuracy, full);
            assert_eq!(p.mean_payload_bytes, 4.0 * m.shape_at(k).unwrap().iter().product::<usize>() as f64);
        }
        let p = evaluate_split(&m, &x, &y, 4, None, &EvalOptions { count_terminal_payload: false }).unwrap();
        assert_eq!(p.mean_payload_bytes, 0.0);
    }

    #[test]
    fn codec_point_counts_header() {
        let m = toy();
        let (x, y) = images(10);
        let cm = calibrate(&m, &x, 1, CodecConfig::new(3, 0, 4)).unwrap();
        let p = evaluate_split(&m, &x, &y, 1, Some(&cm), &EvalOptions::default()).unwrap();
        assert_eq!(p.mean_payload_bytes, crate::codec::BITSTREAM_HEADER_LEN as f64);
        assert_eq!(p.local_flops, profile_model(&m).cumulative_flops[1]);
        // rank-1 activation cannot carry a codec
        assert!(matches!(
            evaluate_split(&m, &x, &y, 3, Some(&cm), &EvalOptions::default()),
            Err(HarnessError::InvalidCut(3))
        ));
    }

    #[test]
    fn single_cell_sweep() {
        let m = toy();
        let (x, y) = images(30);
        let ds = Dataset::new([1, 2, 2], x, y).unwrap();
        let grid = SweepGrid { configs: vec![CodecConfig::new(3, 1, 4)], baseline: None };
        let r = sweep(&m, &ds, &[1], &grid, &SweepOptions::default()).unwrap();
        assert_eq!(r.points.len(), 2);
        assert!(r.points[0].point.codec.is_none());
        assert!(r.points[1].point.codec.is_some());
        assert!(matches!(sweep(&m, &ds, &[], &grid, &SweepOptions::default()), Err(HarnessError::EmptyGrid)));
    }
}
