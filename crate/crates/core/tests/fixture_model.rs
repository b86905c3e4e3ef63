mod common;

use common::{fixture, manifest, toy_data, toy_model};
use splitinfer::harness::model_accuracy;
use splitinfer::model::{read_model, write_model, SplitPlan};
use splitinfer::{fnv1a64, Tensor};

#[test]
fn model_matches_manifest() {
    let m = manifest();
    let model = toy_model();
    let bytes = std::fs::read(fixture("toy10.model")).unwrap();
    assert_eq!(format!("{:016x}", fnv1a64(&bytes)), m.model_fnv1a64);
    assert_eq!(write_model(&model), bytes);
    assert_eq!(model.metadata().name, m.name);
    assert_eq!(model.metadata().input_size, m.input_size);
    assert_eq!(model.metadata().width_multiplier, m.width_multiplier);
    assert_eq!(model.class_count(), m.class_count);
    assert_eq!(model.layer_count() + 1, m.layer_input_shapes.len());
    for (k, s) in m.layer_input_shapes.iter().enumerate() {
        assert_eq!(model.shape_at(k).unwrap(), s.as_slice(), "x_{k}");
    }
}

#[test]
fn dataset_matches_manifest() {
    let m = manifest();
    let data = toy_data();
    let bytes = std::fs::read(fixture("toy10.data")).unwrap();
    assert_eq!(format!("{:016x}", fnv1a64(&bytes)), m.dataset_fnv1a64);
    assert_eq!(data.len(), m.dataset_count);
    let split = data.split();
    assert_eq!(split.test.len(), m.test_count);
    assert_eq!(split.test[0], m.first_test_index);
    assert_eq!(data.label(m.first_test_index), m.first_test_label);
}

#[test]
fn first_test_image_prediction() {
    let m = manifest();
    let model = toy_model();
    let data = toy_data();
    let logits = model.forward(data.image(m.first_test_index)).unwrap();
    assert_eq!(logits.argmax(), m.first_test_prediction);
    assert_eq!(logits.argmax(), m.first_test_label as usize);
}

#[test]
fn logits_agree_with_training_framework() {
    // the generator evaluated the float32 network in another framework;
    // summation order differs, so only closeness is expected
    let model = toy_model();
    let data = toy_data();
    for r in manifest().reference_logits {
        let ours = model.forward(data.image(r.index)).unwrap();
        for (a, b) in ours.data().iter().zip(&r.logits) {
            assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "image {}: {a} vs {b}", r.index);
        }
    }
}

#[test]
fn test_split_accuracy_matches_manifest() {
    let data = toy_data();
    let (images, labels) = data.select(&data.split().test);
    let acc = model_accuracy(&toy_model(), &images, &labels).unwrap();
    assert_eq!(acc, manifest().baseline_top1);
}

#[test]
fn zero_input_gives_finite_logits() {
    let model = toy_model();
    let y = model.forward(&Tensor::zeros(vec![1, 16, 16])).unwrap();
    assert!(y.is_finite());
    assert_eq!(y.shape(), [10]);
}

#[test]
fn prefix_at_three_has_declared_shape() {
    let model = toy_model();
    let data = toy_data();
    let plan = SplitPlan::new(&model, 3).unwrap();
    let x3 = model.forward_prefix(data.image(0), plan).unwrap();
    assert_eq!(x3.shape(), manifest().layer_input_shapes[3].as_slice());
}

#[test]
fn composition_on_every_cut() {
    let model = toy_model();
    let data = toy_data();
    for i in data.split().test.iter().take(10) {
        let x = data.image(*i);
        let full = model.forward(x).unwrap();
        for k in model.valid_cuts() {
            let plan = SplitPlan::new(&model, k).unwrap();
            let y = model.forward_suffix(&model.forward_prefix(x, plan).unwrap(), plan).unwrap();
            assert!(y.bits_eq(&full), "image {i}, k={k}");
        }
    }
}

#[test]
fn cuts_inside_the_residual_are_rejected() {
    let model = toy_model();
    let cuts = model.valid_cuts();
    assert_eq!(cuts, (0..=11).chain(20..=25).collect::<Vec<_>>());
    for k in 12..=19 {
        assert!(SplitPlan::new(&model, k).is_err(), "k={k}");
    }
    assert_eq!(model.codec_cuts(), (1..=11).chain(20..=23).collect::<Vec<_>>());
}

#[test]
fn corrupted_fixture_is_rejected() {
    let mut bytes = std::fs::read(fixture("toy10.model")).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 0x40;
    assert!(read_model(&bytes).is_err());
    assert!(read_model(&[]).is_err());
}
