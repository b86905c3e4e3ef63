//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{toy_data, toy_model};
use splitinfer::codec::{decode, encode, symmetric_eigendecomposition, CodecConfig, CodecModel, BITSTREAM_HEADER_LEN};
use splitinfer::harness::{
    calibrate, evaluate_split, model_accuracy, split_pipeline, sweep_with, Dataset, EvalOptions, SweepGrid,
    SweepOptions, SweepReport,
};
use splitinfer::model::{Conv2d, Dense, DepthwiseConv2d, Layer, ModelGraph, SplitPlan};
use splitinfer::planner::{pareto_frontier, TradeoffPoint};
use splitinfer::profiler::layer_cost;
use splitinfer::transport::{spawn_server, RemoteClient, ServerState};
use splitinfer::Tensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel_l2(a: &Tensor, b: &Tensor) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    let den: f64 = a.data().iter().map(|&x| (x as f64).powi(2)).sum();
    (num / den).sqrt()
}

fn composition(model: &ModelGraph, data: &Dataset) -> Outcome {
    let start = Instant::now();
    let cuts = model.valid_cuts();
    let mut mismatches = 0;
    for &i in data.split().test.iter().take(50) {
        let x = data.image(i);
        let full = model.forward(x).unwrap();
        for &k in &cuts {
            let plan = SplitPlan::new(model, k).unwrap();
            let y = model.forward_suffix(&model.forward_prefix(x, plan).unwrap(), plan).unwrap();
            if !y.bits_eq(&full) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("50 images x {} cuts, {mismatches} bitwise mismatches, {:.2} s", cuts.len(), elapsed.as_secs_f64()),
    )
}

fn codec_round_trip(model: &ModelGraph, calibration: &[Tensor], test: &[Tensor]) -> Outcome {
    // the default 4σ clip saturates on heavy activation tails, so the
    // near-lossless setting widens it; the default is reported alongside
    let worst_at = |k: usize, clip: f32| {
        let cm = calibrate(model, calibration, k, CodecConfig::new(8, 8, 16).with_clip(clip)).unwrap();
        let plan = SplitPlan::new(model, k).unwrap();
        test.iter()
            .map(|x| {
                let x_k = model.forward_prefix(x, plan).unwrap();
                rel_l2(&x_k, &decode(&cm, &encode(&cm, &x_k, k).unwrap()).unwrap())
            })
            .fold(0.0f64, f64::max)
    };
    let cuts = [4, 10, 20];
    let worst: Vec<f64> = cuts.iter().map(|&k| worst_at(k, 8.0)).collect();
    let default_clip: Vec<f64> = cuts.iter().map(|&k| worst_at(k, 4.0)).collect();
    outcome(
        worst.iter().all(|&e| e <= 1e-3),
        format!(
            "d=m=8 b=16 clip=8, k={cuts:?}, {} tensors each, worst rel L2 {:?} (clip=4: {:?})",
            test.len(),
            worst.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            default_clip.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()
        ),
    )
}

fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Violations of the entropy bound, prefix-freeness or completeness for one
/// fitted code.
fn check_huffman(cm: &CodecModel, activations: &[Tensor]) -> Vec<String> {
    let mut problems = Vec::new();
    let counts = cm.smoothed_histogram(activations).unwrap();
    let total: u64 = counts.iter().sum();
    let h = entropy_bits(&counts);
    let code = cm.huffman();
    let mean: f64 =
        counts.iter().enumerate().map(|(s, &c)| c as f64 * code.code(s).1 as f64).sum::<f64>() / total as f64;
    let tag = format!("{:?}", cm.config());
    if !(h <= mean + 1e-12 && mean < h + 1.0) {
        problems.push(format!("{tag}: H={h} L={mean}"));
    }
    let lengths = code.lengths();
    if lengths.contains(&0) {
        problems.push(format!("{tag}: zero-length codeword"));
    }
    let kraft: f64 = lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
    if (kraft - 1.0).abs() > 1e-12 {
        problems.push(format!("{tag}: Kraft sum {kraft}"));
    }
    if cm.config().quant_bits <= 8 {
        let words: Vec<(u64, u8)> = (0..lengths.len()).map(|s| code.code(s)).collect();
        for (i, &(a, la)) in words.iter().enumerate() {
            for (j, &(b, lb)) in words.iter().enumerate() {
                if i != j && la <= lb && (b >> (lb - la)) == a {
                    problems.push(format!("{tag}: codeword {i} prefixes {j}"));
                }
            }
        }
    }
    problems
}

fn eigensolver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst_rec = 0.0f64;
    let mut worst_orth = 0.0f64;
    for _ in 0..100 {
        let d = rng.gen_range(1..=16);
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let mut a = vec![0.0f64; d * d];
        for i in 0..d {
            for j in i..d {
                let v = rng.gen_range(-1.0..1.0) * scale;
                a[i * d + j] = v;
                a[j * d + i] = v;
            }
        }
        let e = symmetric_eigendecomposition(&a, d).unwrap();
        let v = |r: usize, c: usize| e.vectors[r * d + c];
        for i in 0..d {
            for j in 0..d {
                let rec: f64 = (0..d).map(|t| v(i, t) * e.values[t] * v(j, t)).sum();
                worst_rec = worst_rec.max((rec - a[i * d + j]).abs());
                let dot: f64 = (0..d).map(|t| v(t, i) * v(t, j)).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                worst_orth = worst_orth.max((dot - id).abs());
            }
        }
    }
    outcome(
        worst_rec <= 1e-8 && worst_orth <= 1e-8,
        format!("100 matrices d<=16, max |A-VLV^T| {worst_rec:.1e}, max |V^TV-I| {worst_orth:.1e}"),
    )
}

fn pareto_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfa12e70);
    let mut failures = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=100);
        // coarse axes so ties and duplicates are common
        let pts: Vec<TradeoffPoint> = (0..n)
            .map(|i| TradeoffPoint {
                k: i,
                codec: None,
                local_flops: rng.gen_range(0..12),
                mean_payload_bytes: rng.gen_range(0..12) as f64 * 8.0,
                top1_accuracy: rng.gen_range(0..12) as f64 / 11.0,
            })
            .collect();
        let beats = |a: &TradeoffPoint, b: &TradeoffPoint| {
            a.local_flops <= b.local_flops
                && a.mean_payload_bytes <= b.mean_payload_bytes
                && a.top1_accuracy >= b.top1_accuracy
                && (a.local_flops, a.mean_payload_bytes, a.top1_accuracy)
                    != (b.local_flops, b.mean_payload_bytes, b.top1_accuracy)
        };
        let expected: HashSet<usize> = (0..n).filter(|&i| !(0..n).any(|j| beats(&pts[j], &pts[i]))).collect();
        let got: Vec<usize> = pareto_frontier(&pts).unwrap().iter().map(|p| p.k).collect();
        let sorted = got.windows(2).all(|w| {
            (pts[w[0]].mean_payload_bytes, pts[w[0]].local_flops)
                <= (pts[w[1]].mean_payload_bytes, pts[w[1]].local_flops)
        });
        if got.len() != expected.len() || !got.iter().all(|i| expected.contains(i)) || !sorted {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("1000 random sets of <=100 points, {failures} disagreements with brute force"))
}

fn lossless_path(model: &ModelGraph, test: &[Tensor], labels: &[u32]) -> Outcome {
    let full = model_accuracy(model, test, labels).unwrap();
    let cuts = model.valid_cuts();
    let off: Vec<usize> = cuts
        .iter()
        .copied()
        .filter(|&k| {
            evaluate_split(model, test, labels, k, None, &EvalOptions::default()).unwrap().top1_accuracy != full
        })
        .collect();
    outcome(
        off.is_empty(),
        format!("raw-path accuracy at {} cuts vs full model {full:.4}, differing at {off:?}", cuts.len()),
    )
}

fn sweet_spot(model: &ModelGraph, report: &SweepReport, elapsed: Duration) -> Outcome {
    let raw_input = 4 * model.input_shape().iter().product::<usize>();
    let raw_acc = report.points.iter().find(|p| p.point.codec.is_none()).map(|p| p.point.top1_accuracy).unwrap();
    let last_pre_logits = *model.codec_cuts().last().unwrap();
    let within: Vec<&TradeoffPoint> = report
        .points
        .iter()
        .map(|p| &p.point)
        .filter(|p| p.codec.is_some() && raw_acc - p.top1_accuracy <= 0.01 + 1e-12)
        .collect();
    let interior_hit = within
        .iter()
        .filter(|p| p.k > 1 && p.k < last_pre_logits && p.mean_payload_bytes <= 0.5 * raw_input as f64)
        .min_by(|a, b| a.mean_payload_bytes.total_cmp(&b.mean_payload_bytes));
    let best = within
        .iter()
        .min_by(|a, b| a.mean_payload_bytes.total_cmp(&b.mean_payload_bytes).then(a.local_flops.cmp(&b.local_flops)));
    let best_at =
        |k: usize| within.iter().filter(|p| p.k == k).map(|p| p.mean_payload_bytes).fold(f64::INFINITY, f64::min);
    let pass = interior_hit.is_some()
        && best.is_some_and(|b| b.k != 1 && b.k != last_pre_logits)
        && elapsed < Duration::from_secs(30 * 60);
    let describe = |p: &TradeoffPoint| {
        let c = p.codec.unwrap();
        format!(
            "k={} d={} m={} b={} {:.1} B acc {:.4}",
            p.k, c.block_size, c.components, c.quant_bits, p.mean_payload_bytes, p.top1_accuracy
        )
    };
    outcome(
        pass,
        format!(
            "raw input {raw_input} B, raw acc {raw_acc:.4}; best <=1pp: {}; k=1 best {:.1} B, k={last_pre_logits} best {:.1} B; sweep {:.0} s",
            best.map_or("none".into(), |p| describe(p)),
            best_at(1),
            best_at(last_pre_logits),
            elapsed.as_secs_f64()
        ),
    )
}

fn transport(model: &ModelGraph, calibration: &[Tensor], data: &Dataset) -> Outcome {
    let test = data.split().test;
    let mut calls = 0;
    let mut mismatches = 0;
    for (k, config) in [(7, CodecConfig::new(8, 4, 6)), (20, CodecConfig::new(4, 2, 6))] {
        let codec = calibrate(model, calibration, k, config).unwrap();
        let server = spawn_server(ServerState::new(model.clone(), codec.clone(), k).unwrap(), "127.0.0.1:0").unwrap();
        let mut client = RemoteClient::connect(server.local_addr(), Duration::from_secs(30)).unwrap();
        let plan = SplitPlan::new(model, k).unwrap();
        for &i in test.iter().skip(calls).take(10) {
            let x = data.image(i);
            let remote = client.infer(model, &codec, k, x).unwrap();
            let local = split_pipeline(model, x, plan, Some(&codec)).unwrap();
            let bs = encode(&codec, &model.forward_prefix(x, plan).unwrap(), k).unwrap();
            let framing = bs.payload_bit_count.div_ceil(8) as usize + BITSTREAM_HEADER_LEN + 4;
            if !remote.logits.bits_eq(&local.logits) || remote.bytes_sent != framing {
                mismatches += 1;
            }
            calls += 1;
        }
        server.shutdown();
    }
    outcome(
        calls == 20 && mismatches == 0,
        format!("{calls} loopback calls at k=7 and k=20, {mismatches} logit or byte-count mismatches"),
    )
}

fn profiler() -> Outcome {
    let conv = Layer::Conv2d(Conv2d {
        in_channels: 3,
        out_channels: 8,
        kernel: 3,
        stride: 1,
        padding: 1,
        weight: vec![0.0; 8 * 3 * 9],
        bias: vec![0.0; 8],
    });
    let dw = Layer::DepthwiseConv2d(DepthwiseConv2d {
        channels: 24,
        kernel: 3,
        stride: 2,
        padding: 1,
        weight: vec![0.0; 24 * 9],
        bias: vec![0.0; 24],
    });
    let dense = Layer::Dense(Dense { in_features: 64, out_features: 10, weight: vec![0.0; 640], bias: vec![0.0; 10] });
    let cases: [(&str, Layer, Vec<usize>, u64); 5] = [
        // 16·16·8·27 MACs = 55,296 → 110,592 + 2,048 bias
        ("conv 3->8 k3 16x16", conv, vec![3, 16, 16], 112_640),
        // 4·4·24·9 MACs = 3,456 → 6,912 + 384 bias
        ("depthwise 24 k3 s2 8x8", dw, vec![24, 8, 8], 7_296),
        ("relu6 10x4x4", Layer::Relu6, vec![10, 4, 4], 160),
        // one add per input element
        ("global avg pool 64x4x4", Layer::GlobalAvgPool, vec![64, 4, 4], 1_024),
        // 2·640 + 10
        ("dense 64->10", dense, vec![64], 1_290),
    ];
    let mut wrong = Vec::new();
    for (name, layer, shape, expected) in &cases {
        let got = layer_cost(layer, shape).unwrap().flops;
        if got != *expected {
            wrong.push(format!("{name}: {got} != {expected}"));
        }
    }
    outcome(wrong.is_empty(), format!("5 hand-counted layers, mismatches {wrong:?}"))
}

fn main() {
    let model = toy_model();
    let data = toy_data();
    let split = data.split();
    let cal_idx: Vec<usize> = split.calibration.iter().copied().take(200).collect();
    let (calibration, _) = data.select(&cal_idx);
    let (test, labels) = data.select(&split.test);

    let grid = SweepGrid::load(common::fixture("grid.json")).unwrap();
    let huffman_problems = Mutex::new(Vec::new());
    let fitted = Mutex::new(0usize);
    let start = Instant::now();
    let report = sweep_with(&model, &data, &model.codec_cuts(), &grid, &SweepOptions::default(), |_, cm, acts| {
        let p = check_huffman(cm, acts);
        *fitted.lock().unwrap() += 1;
        huffman_problems.lock().unwrap().extend(p);
    })
    .unwrap();
    let sweep_time = start.elapsed();
    let problems = huffman_problems.into_inner().unwrap();
    let fitted = fitted.into_inner().unwrap();

    let results = [
        ("composition", composition(&model, &data)),
        ("codec round-trip", codec_round_trip(&model, &calibration, &test)),
        (
            "huffman optimality",
            outcome(
                problems.is_empty() && fitted > 0,
                format!("{fitted} fitted codes, H <= L < H+1, Kraft = 1, prefix-free for b<=8; problems {problems:?}"),
            ),
        ),
        ("eigensolver", eigensolver()),
        ("pareto oracle", pareto_oracle()),
        ("lossless-path accuracy", lossless_path(&model, &test, &labels)),
        ("sweet spot", sweet_spot(&model, &report, sweep_time)),
        ("transport transparency", transport(&model, &calibration, &data)),
        ("profiler", profiler()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
