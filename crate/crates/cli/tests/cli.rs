use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FIXTURE: &str = "synthetic:er:14:0.3:8,ba:14:2:8";

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_graph2d"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn stats_on_benchmark_files() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("TRI");
    fs::create_dir(&ds).unwrap();
    fs::write(ds.join("TRI_A.txt"), "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n").unwrap();
    fs::write(ds.join("TRI_graph_indicator.txt"), "1\n1\n1\n2\n2\n").unwrap();
    fs::write(ds.join("TRI_graph_labels.txt"), "1\n-1\n").unwrap();
    let text = stdout(&run(dir.path(), &["stats", ds.to_str().unwrap()]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("TRI,"), "{text}");
}

#[test]
fn embed_rasterize_train_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(
        d,
        &[
            "embed",
            "--dataset",
            FIXTURE,
            "--out",
            "emb.bin",
            "--dim",
            "4",
            "--walks-per-node",
            "2",
            "--walk-length",
            "10",
            "--context-size",
            "3",
        ],
    );
    assert!(d.join("emb.bin").exists());
    let text = stdout(&run(
        d,
        &[
            "rasterize",
            "--dataset",
            FIXTURE,
            "--embeddings",
            "emb.bin",
            "--out",
            "img.bin",
            "--dims",
            "4",
            "--image-size",
            "8",
        ],
    ));
    assert!(text.contains("16 images of shape 2x8x8"), "{text}");
    assert!(d.join("img.pca.bin").exists());
    let text = stdout(&run(
        d,
        &[
            "train",
            "--images",
            "img.bin",
            "--out",
            "model.bin",
            "--max-epochs",
            "2",
            "--hidden",
            "8",
            "--history",
            "h.csv",
        ],
    ));
    assert!(text.starts_with("best epoch"), "{text}");
    assert_eq!(fs::read_to_string(d.join("h.csv")).unwrap().lines().count(), 3);
    run(d, &["predict", "--model", "model.bin", "--images", "img.bin", "--out", "pred.csv"]);
    let pred = fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "index,label,predicted,p0,p1");
    assert_eq!(pred.lines().count(), 17);
}

#[test]
fn kernel_then_svm_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text =
        stdout(&run(d, &["kernel", "--type", "wl", "--dataset", FIXTURE, "--out", "k.bin", "--timings", "t.csv"]));
    assert!(text.starts_with("16x16 kernel"), "{text}");
    assert_eq!(fs::read_to_string(d.join("t.csv")).unwrap().lines().count(), 2);
    let text = stdout(&run(
        d,
        &[
            "svm-eval",
            "--kernel-file",
            "k.bin",
            "--dataset",
            FIXTURE,
            "--c-grid",
            "1,10",
            "--folds",
            "4",
            "--repeats",
            "2",
            "--out",
            "r.csv",
        ],
    ));
    assert!(text.contains("over 8 folds"), "{text}");
    run(d, &["kernel", "--type", "graphlet", "--dataset", FIXTURE, "--out", "g.bin", "--samples", "100"]);
}

#[test]
fn evaluate_against_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(d, &["evaluate", "--method", "majority", "--dataset", FIXTURE, "--folds", "4", "--out", "base"]);
    fs::write(d.join("wl.json"), r#"{"c_grid": [1.0], "wl_iterations": [2]}"#).unwrap();
    let text = stdout(&run(
        d,
        &[
            "evaluate",
            "--method",
            "wl",
            "--dataset",
            FIXTURE,
            "--config",
            "wl.json",
            "--folds",
            "4",
            "--out",
            "wl",
            "--baseline",
            "base/result.json",
        ],
    ));
    assert!(text.contains("vs majority"), "{text}");
    assert_eq!(fs::read_to_string(d.join("wl/results.csv")).unwrap().lines().count(), 13);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("wl/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 12);
    assert_eq!(summary["comparisons"].as_array().unwrap().len(), 1);
    assert!(d.join("wl/timings.csv").exists());
}

#[test]
fn unknown_preset_is_an_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_graph2d"))
        .args(["evaluate", "--method", "cnn", "--dataset", FIXTURE, "--preset", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}
