use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sdpnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdpnn"))
        .args(args)
        .env_remove("SDPNN_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Two separable blobs, 12 rows.
fn tiny_csv(dir: &Path) -> String {
    let mut text = String::from("a,b,label\n");
    for i in 0..6 {
        let t = i as f64 * 0.1;
        text.push_str(&format!("{},{},yes\n", 1.0 + t, 0.5 - t));
        text.push_str(&format!("{},{},no\n", -1.0 - t, -0.5 + t));
    }
    let path = dir.join("tiny.csv");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn solve_tiny(tmp: &TempDir, run: &str) -> String {
    let csv = tiny_csv(tmp.path());
    let out = tmp.path().join(run);
    let out_s = out.to_string_lossy().into_owned();
    let res = sdpnn(&[
        "solve", "--dataset", "csv", "--csv", &csv, "--train-count", "8", "--gamma", "0.1", "--max-iters", "3000",
        "--out", &out_s,
    ]);
    assert!(matches!(res.status.code(), Some(0 | 2)), "{}", stderr(&res));
    out_s
}

#[test]
fn solve_writes_all_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let res = sdpnn(&["solve", "--dataset", "random", "--gamma", "0.1", "--max-iters", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "200 iterations cannot converge: {}", stderr(&res));
    for f in ["manifest.json", "lambda_star.bin", "lambda_star.json", "trace.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let man = read_json(&out.join("manifest.json"));
    assert_eq!(man["command"], "solve");
    assert_eq!(man["solve"]["status"], "MaxIterations");
    let p = man["problem"]["p"].as_u64().unwrap();
    let meta = read_json(&out.join("lambda_star.json"));
    assert_eq!(meta["rows"].as_u64(), Some(p));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 201);
}

#[test]
fn invalid_gamma_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let res = sdpnn(&["solve", "--gamma", "-1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("gamma"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn unknown_dataset_is_an_error() {
    let res = sdpnn(&["data", "--dataset", "nope", "--out", "/nonexistent"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("nope"));
}

#[test]
fn round_then_evaluate() {
    let tmp = TempDir::new().unwrap();
    let run = solve_tiny(&tmp, "run");
    let res = sdpnn(&["round", "--run", &run, "--round-width", "20", "--round-iters", "200"]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let weights = read_json(&Path::new(&run).join("weights.json"));
    assert!(weights.get("u").is_some() && weights.get("v").is_some(), "{weights}");
    let hist = std::fs::read_to_string(Path::new(&run).join("phi_history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 201);

    let res = sdpnn(&["evaluate", "--run", &run]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let metrics = read_json(&Path::new(&run).join("metrics.json"));
    let acc = metrics["metrics"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn round_rejects_tampered_lambda() {
    let tmp = TempDir::new().unwrap();
    let run = solve_tiny(&tmp, "run");
    let bin = Path::new(&run).join("lambda_star.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&bin, bytes).unwrap();
    let res = sdpnn(&["round", "--run", &run]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("lambda_star.bin"), "{}", stderr(&res));
}

#[test]
fn round_rejects_a_changed_dataset() {
    let tmp = TempDir::new().unwrap();
    let run = solve_tiny(&tmp, "run");
    let csv = tmp.path().join("tiny.csv");
    let text = std::fs::read_to_string(&csv).unwrap().replacen("1,0.5", "1,0.75", 1);
    std::fs::write(&csv, text).unwrap();
    let res = sdpnn(&["round", "--run", &run]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("hash"), "{}", stderr(&res));
}

#[test]
fn data_command_reports_shapes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("iris");
    let res = sdpnn(&["data", "--dataset", "iris", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("iris: train "), "{text}");
    let man = read_json(&out.join("dataset.manifest.json"));
    assert_eq!(man["spec"]["kind"], "csv");
    assert!(out.join("dataset.json").is_file());
}

#[test]
fn sdpa_export_is_written() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let sdpa = tmp.path().join("random.dat-s");
    let res = sdpnn(&[
        "solve", "--max-iters", "5", "--out", out.to_str().unwrap(), "--sdpa", sdpa.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
    let text = std::fs::read_to_string(&sdpa).unwrap();
    assert!(text.lines().any(|l| !l.starts_with('"') && !l.starts_with('*')));
}

#[test]
fn train_sgd_writes_loss_curve() {
    let tmp = TempDir::new().unwrap();
    let csv = tiny_csv(tmp.path());
    let out = tmp.path().join("sgd");
    let res = sdpnn(&[
        "train-sgd", "--dataset", "csv", "--csv", &csv, "--width", "8", "--lr", "1e-2", "--iters", "100", "--restarts", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    assert!(String::from_utf8_lossy(&res.stdout).contains("final_loss="));
    let curve = std::fs::read_to_string(out.join("loss_curve.csv")).unwrap();
    assert!(curve.lines().count() > 100);
    let res = sdpnn(&["evaluate", "--run", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
}
