mod common;

use std::process::Command;

use common::fixture;

fn splitinfer() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitinfer"))
}

#[test]
fn profile_prints_one_row_per_layer() {
    let out = splitinfer().arg("profile").arg(fixture("toy10.model")).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "layer_index,kind,flops,cumulative_flops,raw_bytes");
    assert_eq!(lines.len(), 26);
    assert_eq!(lines[1], "0,conv2d,9728,9728,2048");
    assert!(lines[25].starts_with("24,dense,1290,"));
}

#[test]
fn calibrate_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let codec = dir.path().join("k10.splitcdc");
    let status = splitinfer()
        .args(["calibrate"])
        .arg(fixture("toy10.model"))
        .arg(fixture("toy10.data"))
        .args(["--k", "10", "--d", "4", "--m", "2", "--b", "6", "--calibration-limit", "50", "-o"])
        .arg(&codec)
        .status()
        .unwrap();
    assert!(status.success());
    let out = splitinfer()
        .arg("eval")
        .arg(fixture("toy10.model"))
        .arg(fixture("toy10.data"))
        .args(["--k", "10", "--codec"])
        .arg(&codec)
        .output()
        .unwrap();
    assert!(out.status.success());
    let p: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(p["k"], 10);
    assert_eq!(p["codec"]["m"], 2);
    assert!(p["top1_accuracy"].as_f64().unwrap() > 0.5);
}

#[test]
fn plan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("points.csv");
    std::fs::write(
        &report,
        "k,d,m,b,clip,local_flops,mean_payload_bytes,top1_accuracy\n\
         0,,,,,0,1024,0.97\n\
         10,4,2,6,4,60224,90,0.96\n",
    )
    .unwrap();
    let ok = splitinfer().arg("plan").arg(&report).args(["--max-bytes", "100"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8(ok.stdout).unwrap().starts_with("k=10 d=4 m=2 b=6"));

    let infeasible =
        splitinfer().arg("plan").arg(&report).args(["--max-bytes", "50", "--min-acc", "0.99"]).status().unwrap();
    assert_eq!(infeasible.code(), Some(2));

    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, b"SPLITMDX").unwrap();
    let st = splitinfer().arg("profile").arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn sweep_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"configs":[{"d":4,"m":2,"b":4}],"baseline":{"bytes":300,"accuracy":0.9}}"#).unwrap();
    let out = dir.path().join("report.json");
    let st = splitinfer()
        .arg("sweep")
        .arg(fixture("toy10.model"))
        .arg(fixture("toy10.data"))
        .args(["--k-list", "10,20", "--calibration-limit", "40", "--grid"])
        .arg(&grid)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["points"].as_array().unwrap().len(), 4);
    assert_eq!(r["baseline"]["bytes"], 300.0);
    assert_eq!(r["provenance"]["model_name"], "toy10");

    let plan = splitinfer().arg("plan").arg(&out).output().unwrap();
    assert!(plan.status.success());
    assert!(!plan.stdout.is_empty());
}
