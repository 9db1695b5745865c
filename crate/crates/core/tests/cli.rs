use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn ilrgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilrgp")).args(args).output().expect("run ilrgp")
}

fn ok(args: &[&str]) -> String {
    let out = ilrgp(args);
    assert!(
        out.status.success(),
        "ilrgp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_is_fast_and_byte_identical_on_refit() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let base = ["--generator", "circle-mixture", "--param", "classes=4", "--param", "n=400", "--seed", "0"];
    let t = Instant::now();
    ok(&[&["fit", "--out", s(&a)][..], &base].concat());
    assert!(t.elapsed().as_secs_f64() < 60.0);
    ok(&[&["fit", "--out", s(&b)][..], &base].concat());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let model: Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(model["format"], "ilrgp-model");
    assert_eq!(model["config"]["classes"], 4);
}

#[test]
fn eval_reports_zero_error_on_separable_data_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    ok(&[
        "fit", "--out", s(&m), "--generator", "circle-mixture", "--param", "classes=3", "--param", "n=200",
        "--param", "mix_sd=0.05", "--normalization", "zscore",
    ]);
    let r1 = ok(&["eval", "--model", s(&m)]);
    let r2 = ok(&["eval", "--model", s(&m)]);
    assert_eq!(r1, r2);
    let v: Value = serde_json::from_str(&r1).unwrap();
    assert_eq!(v["error"], 0.0);
    assert_eq!(v["split"], "test");
    assert_eq!(v["size"], 40);
    for key in ["nll", "ece", "bins", "config"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["bins"].as_array().unwrap().len(), 10);
}

#[test]
fn csv_round_trip_through_fit_eval_predict() {
    let dir = tempfile::tempdir().unwrap();
    let ds = ilr_gp::data::gen_overlap_toy(0.1, 150, 3).unwrap();
    let data = dir.path().join("toy.csv");
    ilr_gp::data::write_csv(&ds, &data).unwrap();
    let m = dir.path().join("m.json");
    ok(&["fit", "--data", s(&data), "--out", s(&m), "--param", "mc_samples=200"]);
    let v: Value = serde_json::from_str(&ok(&["eval", "--model", s(&m), "--split", "all"])).unwrap();
    assert_eq!(v["size"], 150);
    assert!(v["error"].as_f64().unwrap() < 0.2);

    let preds = dir.path().join("p.csv");
    ok(&["predict", "--model", s(&m), "--data", s(&data), "--out", s(&preds)]);
    let text = std::fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "row,predicted,p_0,p_1,p_2");
    assert_eq!(lines.count(), 150);
    // standard output carries the same table
    assert_eq!(ok(&["predict", "--model", s(&m), "--data", s(&data)]), text);
}

#[test]
fn sweep_writes_grid_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let v: Value = serde_json::from_str(&ok(&[
        "sweep", "--out", s(&out), "--generator", "overlap-toy", "--param", "n=200", "--param", "grid=[0.9,0.99,0.999]",
        "--mc-samples", "100",
    ]))
    .unwrap();
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "setting,val_nll,val_error,val_ece");
    assert_eq!(csv.lines().count(), 4);
    assert!([0.9, 0.99, 0.999].contains(&v["selected"].as_f64().unwrap()));
    assert_eq!(v["parameter"], "lambda");
}

#[test]
fn experiments_are_deterministic_and_unknown_names_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"classes": [2, 8], "alpha_eps": [0.1, 0.001], "samples": 5000}"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["experiment", "gpd-recovery", "--config", s(&cfg), "--out", s(out)]);
        ok(&["experiment", "sigma-bound-table", "--out", s(out)]);
    }
    for f in ["gpd-recovery.csv", "sigma-bound-table.csv", "summary.json", "runs/gpd-recovery/0/run.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = ilrgp(&["experiment", "no-such-experiment", "--out", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_missing_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let out = ilrgp(&["fit", "--data", "/definitely/missing.csv", "--out", s(&m)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!m.exists());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    assert_eq!(ilrgp(&["fit"]).status.code(), Some(2));
    assert_eq!(ilrgp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ilrgp(&["eval", "--model", s(&m)]).status.code(), Some(2));
    let out = ilrgp(&["fit", "--generator", "overlap-toy", "--param", "bogus=1", "--out", s(&m)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!m.exists());
}
