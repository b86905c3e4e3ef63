mod common;

use common::{toy_data, toy_model};
use splitinfer::codec::{decode, encode, fit_codec, load_codec, Bitstream, CodecConfig, BITSTREAM_HEADER_LEN};
use splitinfer::harness::{
    calibrate, emit_report, evaluate_split, model_accuracy, sweep, EvalOptions, ReportFormat, SweepGrid, SweepOptions,
    SweepReport,
};
use splitinfer::model::SplitPlan;
use splitinfer::Tensor;

struct Fixture {
    model: splitinfer::model::ModelGraph,
    calibration: Vec<Tensor>,
    test_images: Vec<Tensor>,
    test_labels: Vec<u32>,
}

fn fixture() -> Fixture {
    let data = toy_data();
    let split = data.split();
    let cal: Vec<usize> = split.calibration.iter().copied().take(200).collect();
    let (calibration, _) = data.select(&cal);
    let (test_images, test_labels) = data.select(&split.test);
    Fixture { model: toy_model(), calibration, test_images, test_labels }
}

fn rel_l2(a: &Tensor, b: &Tensor) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    let den: f64 = a.data().iter().map(|&x| (x as f64).powi(2)).sum();
    (num / den).sqrt()
}

#[test]
fn full_rank_b16_is_near_lossless_at_k4() {
    let f = fixture();
    // at the default 4σ clip the heavy activation tails saturate the quantizer
    let cm = calibrate(&f.model, &f.calibration, 4, CodecConfig::new(8, 8, 16).with_clip(8.0)).unwrap();
    let plan = SplitPlan::new(&f.model, 4).unwrap();
    for x in f.test_images.iter().take(20) {
        let x4 = f.model.forward_prefix(x, plan).unwrap();
        let y = decode(&cm, &encode(&cm, &x4, 4).unwrap()).unwrap();
        assert!(rel_l2(&x4, &y) <= 1e-3);
    }
    let opts = EvalOptions::default();
    let raw = evaluate_split(&f.model, &f.test_images, &f.test_labels, 4, None, &opts).unwrap();
    let lossy = evaluate_split(&f.model, &f.test_images, &f.test_labels, 4, Some(&cm), &opts).unwrap();
    assert!((raw.top1_accuracy - lossy.top1_accuracy).abs() <= 0.005);
}

#[test]
fn zero_components_predict_a_single_class() {
    let f = fixture();
    for k in [4, 10] {
        let cm = calibrate(&f.model, &f.calibration, k, CodecConfig::new(4, 0, 4)).unwrap();
        // oracle: every image decodes to the per-block means, so the
        // prediction is the same class for all of them
        let plan = SplitPlan::new(&f.model, k).unwrap();
        let x = f.model.forward_prefix(&f.test_images[0], plan).unwrap();
        let bs = encode(&cm, &x, k).unwrap();
        assert_eq!(bs.byte_len(), BITSTREAM_HEADER_LEN);
        let class = f.model.forward_suffix(&decode(&cm, &bs).unwrap(), plan).unwrap().argmax();
        let expected =
            f.test_labels.iter().filter(|&&l| l as usize == class).count() as f64 / f.test_labels.len() as f64;
        let p =
            evaluate_split(&f.model, &f.test_images, &f.test_labels, k, Some(&cm), &EvalOptions::default()).unwrap();
        assert_eq!(p.top1_accuracy, expected);
        assert!(p.top1_accuracy < 0.25, "near chance for ten balanced classes");
        assert_eq!(p.mean_payload_bytes, BITSTREAM_HEADER_LEN as f64);
    }
}

#[test]
fn raw_path_accuracy_is_full_model_accuracy() {
    let f = fixture();
    let full = model_accuracy(&f.model, &f.test_images, &f.test_labels).unwrap();
    for k in f.model.valid_cuts() {
        let p = evaluate_split(&f.model, &f.test_images, &f.test_labels, k, None, &EvalOptions::default()).unwrap();
        assert_eq!(p.top1_accuracy, full, "k={k}");
    }
}

#[test]
fn duplicated_calibration_images_change_nothing() {
    // population statistics: repeating the calibration set is a no-op
    let f = fixture();
    let two = vec![f.calibration[0].clone(), f.calibration[0].clone()];
    let four = [two.clone(), two.clone()].concat();
    let a = calibrate(&f.model, &two, 4, CodecConfig::new(8, 4, 6)).unwrap();
    let b = calibrate(&f.model, &four, 4, CodecConfig::new(8, 4, 6)).unwrap();
    for (x, y) in a.blocks().iter().zip(b.blocks()) {
        for (l, m) in x.eigenvalues.iter().zip(&y.eigenvalues) {
            assert!((l - m).abs() <= 1e-5 * (1.0 + l.abs()));
        }
    }
}

#[test]
fn codec_file_round_trip_keeps_bitstreams() {
    let f = fixture();
    let plan = SplitPlan::new(&f.model, 7).unwrap();
    let acts: Vec<Tensor> = f.calibration.iter().map(|x| f.model.forward_prefix(x, plan).unwrap()).collect();
    let cm = fit_codec(&acts, CodecConfig::new(8, 4, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k7.splitcdc");
    cm.save(&path).unwrap();
    let back = load_codec(&path).unwrap();
    assert_eq!(back.model_id(), cm.model_id());
    let x = f.model.forward_prefix(&f.test_images[3], plan).unwrap();
    let a = encode(&cm, &x, 7).unwrap().to_bytes();
    let b = encode(&back, &x, 7).unwrap().to_bytes();
    assert_eq!(a, b);
    let restored = decode(&back, &Bitstream::from_bytes(&a).unwrap()).unwrap();
    assert!(restored.bits_eq(&decode(&cm, &Bitstream::from_bytes(&b).unwrap()).unwrap()));
}

fn small_grid() -> SweepGrid {
    SweepGrid::product(&[8], &[1, 2, 4, 8], &[6], 4.0)
}

fn strip_timestamp(r: &SweepReport) -> Vec<u8> {
    let mut r = r.clone();
    r.provenance.timestamp_unix = 0;
    let mut out = Vec::new();
    emit_report(&r, ReportFormat::Json, &mut out).unwrap();
    out
}

#[test]
fn sweep_shape_and_determinism() {
    let model = toy_model();
    let data = toy_data();
    let k_list = [4, 10, 20];
    let grid = small_grid();
    let opts = SweepOptions::default();
    let a = sweep(&model, &data, &k_list, &grid, &opts).unwrap();
    let b = sweep(&model, &data, &k_list, &grid, &opts).unwrap();
    assert_eq!(a.points.len(), k_list.len() * (grid.configs.len() + 1));
    assert_eq!(strip_timestamp(&a), strip_timestamp(&b));

    let mut csv = Vec::new();
    emit_report(&a, ReportFormat::Csv, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), a.points.len() + 1);

    // more components never cost more than 2 points of accuracy
    for chunk in a.points.chunks(grid.configs.len() + 1) {
        let accs: Vec<f64> = chunk[1..].iter().map(|p| p.point.top1_accuracy).collect();
        for w in accs.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "k={}: {accs:?}", chunk[0].point.k);
        }
    }
}
