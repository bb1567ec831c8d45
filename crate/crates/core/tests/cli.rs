//! End-to-end runs of the `spectral-mae` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spectral_mae::signal_io::load_dataset;

const TINY_MODEL: [&str; 10] =
    ["--patch-size", "8", "--embed-dim", "16", "--blocks", "1", "--heads", "2", "--ffn-dim", "32"];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-mae")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn assert_schema_valid(report: &Path) {
    let schema = json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/report.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance = json(report);
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", report.display());
}

/// 100 records of [64 × 3], five classes.
fn tiny_data(dir: &Path, seed: &str) -> PathBuf {
    let data = dir.join(format!("data{seed}"));
    ok(&["gen-data", "--out", s(&data), "--num-examples", "100", "--n-time", "64", "--seed", seed]);
    data
}

fn tiny_pretrain(dir: &Path, data: &Path, target: &str) -> PathBuf {
    let out = dir.join(format!("pre-{target}"));
    let mut args = vec![
        "pretrain",
        "--data",
        s(data),
        "--out",
        s(&out),
        "--target",
        target,
        "--mask-ratio",
        "0.3",
        "--epochs",
        "3",
        "--batch-size",
        "32",
    ];
    args.extend(TINY_MODEL);
    ok(&args);
    out
}

#[test]
fn gen_data_is_loadable_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny_data(tmp.path(), "3");
    let b = tmp.path().join("again");
    ok(&["gen-data", "--out", s(&b), "--num-examples", "100", "--n-time", "64", "--seed", "3"]);
    let ds = load_dataset(&a).unwrap();
    assert_eq!((ds.len(), ds.shape()), (100, Some((64, 3))));
    assert_eq!(fs::read(a.join("data.f32")).unwrap(), fs::read(b.join("data.f32")).unwrap());
}

#[test]
fn invalid_band_names_field_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    // 60 Hz is above the 50 Hz Nyquist frequency
    fs::write(&cfg, r#"{"data": {"bands": [[4, 5], [6, 7], [8, 9], [10, 11], [59, 60]]}}"#).unwrap();
    let out_dir = tmp.path().join("never");
    let out = run(&["gen-data", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bands"));
    assert!(!out_dir.exists());
}

#[test]
fn pretrain_records_mode_and_writes_one_loss_row_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), "1");
    let pre = tiny_pretrain(tmp.path(), &data, "inv-fourier");
    let manifest = json(&pre.join("checkpoint/manifest.json"));
    assert_eq!(manifest["training"]["target_mode"], "inv_fourier");
    assert_eq!(manifest["training"]["mask_ratio"], 0.3);
    let csv = fs::read_to_string(pre.join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,mean_loss");
    assert_eq!(lines.len(), 1 + 3);
    assert_schema_valid(&pre.join("pretrain.json"));
}

#[test]
fn config_errors_exit_2_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), "1");
    let out_dir = tmp.path().join("never");
    let out = run(&["pretrain", "--data", s(&data), "--out", s(&out_dir), "--mask-ratio", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mask_ratio"));
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"finetune": {"epochs": 0}}"#).unwrap();
    let out = run(&["finetune", "--config", s(&cfg), "--data", s(&data), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["finetune", "--data", s(&data), "--out", s(&out_dir), "--labels", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), "1");
    let pre = tiny_pretrain(tmp.path(), &data, "fourier");
    let two_ch = tmp.path().join("two");
    ok(&["gen-data", "--out", s(&two_ch), "--num-examples", "50", "--n-time", "64", "--channels", "2"]);
    let out_dir = tmp.path().join("never");
    let ckpt = pre.join("checkpoint");
    let out = run(&["finetune", "--data", s(&two_ch), "--checkpoint", s(&ckpt), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let missing = tmp.path().join("missing");
    let out = run(&["transfer", "--data", s(&data), "--checkpoint", s(&missing), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.exists());
}

#[test]
fn reports_validate_against_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), "2");
    let pre = tiny_pretrain(tmp.path(), &data, "spatio");
    let ckpt = pre.join("checkpoint");
    let dir = |n: &str| tmp.path().join(n);

    ok(&[
        "finetune",
        "--data",
        s(&data),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&dir("ft")),
        "--epochs",
        "2",
        "--labels",
        "0.1",
    ]);
    // 100 records split 80/20 with a fifth of train held for validation: 64 train records
    let manifest = json(&dir("ft").join("checkpoint/manifest.json"));
    assert_eq!(manifest["training"]["labels"], 0.1);
    assert_eq!(manifest["training"]["train_records"], 6);
    assert_schema_valid(&dir("ft").join("finetune.json"));

    ok(&["probe", "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&dir("probe")), "--k", "5"]);
    assert_schema_valid(&dir("probe").join("probe.json"));

    ok(&[
        "semi",
        "--data",
        s(&data),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&dir("semi")),
        "--epochs",
        "1",
        "--fractions",
        "0.5,1",
        "--seeds",
        "0,1",
    ]);
    let semi = json(&dir("semi").join("semi.json"));
    assert_eq!(semi["rows"].as_array().unwrap().len(), 4);
    assert_schema_valid(&dir("semi").join("semi.json"));

    let reg = tmp.path().join("reg");
    ok(&["gen-data", "--out", s(&reg), "--num-examples", "60", "--n-time", "64", "--regression"]);
    ok(&["transfer", "--data", s(&reg), "--checkpoint", s(&ckpt), "--out", s(&dir("tr")), "--epochs", "1"]);
    assert_eq!(json(&dir("tr").join("transfer.json"))["metrics"]["task"], "regression");
    assert_schema_valid(&dir("tr").join("transfer.json"));

    let abl = dir("abl");
    let mut args = vec![
        "ablate",
        "--data",
        s(&data),
        "--out",
        s(&abl),
        "--pretrain-epochs",
        "1",
        "--finetune-epochs",
        "1",
        "--ratios",
        "0.2,0.4",
        "--modes",
        "spatio,inv-fourier",
        "--seeds",
        "0",
    ];
    args.extend(TINY_MODEL);
    ok(&args);
    assert_eq!(json(&abl.join("ablation.json"))["rows"].as_array().unwrap().len(), 4);
    assert_schema_valid(&abl.join("ablation.json"));
}

#[test]
fn schema_rejects_malformed_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    let schema = json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/report.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    for bad in [
        r#"{"kind": "probe", "k": 0, "knn_acc": 0.5}"#,
        r#"{"kind": "pretrain", "target_mode": "spatio", "mask_ratio": 0.3, "loss_curve": [1.0],
            "meta": {"dataset": "d", "seed": 0, "config_hash": "00"}}"#,
        r#"{"kind": "unknown"}"#,
    ] {
        fs::write(&path, bad).unwrap();
        assert!(!validator.is_valid(&json(&path)), "{bad}");
    }
}

#[test]
fn random_init_probe_is_at_chance_on_uninformative_signals() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("noise");
    // noise 100× the sinusoid amplitude leaves no usable band information
    ok(&["gen-data", "--out", s(&data), "--num-examples", "2500", "--n-time", "32", "--noise-std", "100"]);
    let out = tmp.path().join("probe");
    let mut args = vec!["probe", "--data", s(&data), "--out", s(&out), "--k", "20"];
    args.extend(TINY_MODEL);
    ok(&args);
    let report = json(&out.join("probe.json"));
    for acc in [&report["knn_acc"], &report["linear"]["acc"]] {
        let acc = acc.as_f64().unwrap();
        assert!((acc - 0.2).abs() <= 0.05, "{acc}");
    }
}

#[test]
fn reconstruct_exports_expected_rows_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), "4");
    let pre = tiny_pretrain(tmp.path(), &data, "inv-fourier");
    let ckpt = pre.join("checkpoint");
    let export = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "reconstruct",
            "--checkpoint",
            s(&ckpt),
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--index",
            "7",
            "--mask-seed",
            seed,
            "--svg",
        ]);
        out
    };
    let (a, b) = (export("a", "11"), export("b", "11"));
    // n_time 64 with P = 8 needs no padding: 64 samples, 33 bins
    for c in 0..3 {
        let ch = fs::read_to_string(a.join(format!("channel_{c}.csv"))).unwrap();
        assert_eq!(ch.lines().count(), 1 + 64);
        assert!(ch.starts_with("t,original,reconstructed\n"));
        let sp = fs::read_to_string(a.join(format!("spectrum_{c}.csv"))).unwrap();
        assert_eq!(sp.lines().count(), 1 + 33);
        assert!(sp.starts_with("bin,true_mag,pred_mag,true_phase,pred_phase\n"));
    }
    for f in ["channel_0.csv", "spectrum_2.csv", "summary.json", "reconstruction.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(fs::read_to_string(a.join("reconstruction.svg")).unwrap().contains("<polyline"));

    let never = tmp.path().join("never");
    let out = run(&["reconstruct", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&never), "--index", "100"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("index"));
    let spatio = tiny_pretrain(tmp.path(), &data, "spatio");
    let out =
        run(&["reconstruct", "--checkpoint", s(&spatio.join("checkpoint")), "--data", s(&data), "--out", s(&never)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!never.exists());
}
