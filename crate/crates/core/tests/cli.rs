use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "seed": 3,
  "output_dir": "run",
  "data_dir": "data",
  "dataset": { "n_per_class": 12, "height": 10, "width": 10, "channels": 1 },
  "preprocess": { "resize_short": 10, "crop": 8 },
  "net": { "stem_width": 12, "blocks": 1, "cardinality": 2, "branch_width": 4, "head_hidden": [8, 6] },
  "pretext": { "n": 40 },
  "pretrain": { "epochs": 1, "lr": 0.05, "batch_size": 8 },
  "train": {
    "carci": { "batch_size": 6, "head_epochs": 1, "fine_tune_epochs": 1 },
    "norbe": { "batch_size": 6, "head_epochs": 1, "fine_tune_epochs": 1 },
    "invis": { "batch_size": 6, "head_epochs": 1, "fine_tune_epochs": 1 }
  }
}"#;

fn hierlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierlearn")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hierlearn(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let s = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(s.lines().count(), 1, "expected one stderr line, got {s:?}");
    s.trim_end().to_string()
}

fn staged() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), TINY).unwrap();
    ok(dir.path(), &["gen-data", "--config", "config.json", "--out", "data"]);
    dir
}

#[test]
fn full_cycle() {
    let dir = staged();
    let d = dir.path();
    let out = ok(d, &["train-hierarchy", "--config", "config.json"]);
    assert!(out.lines().any(|l| l == "manifest\trun/manifest.json"), "{out}");
    for f in ["generic.json", "manifest.json", "carci/best.json", "carci/lr_find.csv", "norbe/selection.json"] {
        assert!(d.join("run").join(f).is_file(), "missing {f}");
    }

    let out = ok(d, &["eval", "--manifest", "run/manifest.json", "--data", "data"]);
    assert!(out.starts_with("Models"), "{out}");
    assert!(out.contains("samples\t12"), "{out}");
    let table = std::fs::read_to_string(d.join("run/table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(d.join("run/confusion.csv").is_file());

    let label = ok(d, &["predict", "--manifest", "run/manifest.json", "--input", "data/normal/00000.bin"]);
    assert!(["Normal", "Benign", "InSitu", "Invasive"].contains(&label.trim()), "{label}");
    let soft = ok(d, &["predict", "--manifest", "run/manifest.json", "--input", "data/normal/00000.bin", "--soft"]);
    let probs: Vec<f64> = soft.lines().map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(probs.len(), 4);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);

    let out = ok(d, &["ensemble", "--manifest", "run/manifest.json", "--add", "run/carci/final.json", "--node", "carci"]);
    assert_eq!(out.trim(), "carci\tversions\t2");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["nodes"]["carci"]["versions"][1]["path"], "carci/final.json");
    ok(d, &["eval", "--manifest", "run/manifest.json", "--data", "data"]);
}

#[test]
fn single_node_commands() {
    let dir = staged();
    let d = dir.path();
    let out = ok(d, &["lr-find", "--config", "config.json", "--node", "invis"]);
    assert!(out.starts_with("eta_max\t"), "{out}");
    let csv = std::fs::read_to_string(d.join("run/lr_find_invis.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iter,lr,raw_loss,smoothed_loss"));

    let out = ok(d, &["train-node", "--config", "config.json", "--node", "NorBe"]);
    assert!(out.contains("epochs\t2"), "{out}");
    let epochs = std::fs::read_to_string(d.join("run/norbe/epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);
}

#[test]
fn gen_data_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), TINY).unwrap();
    let out = ok(dir.path(), &["gen-data", "--config", "config.json", "--out", "data"]);
    for class in ["normal", "benign", "insitu", "invasive"] {
        assert!(out.lines().any(|l| l == format!("{class}\t12")), "{out}");
    }
}

#[test]
fn errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = hierlearn(d, &["gen-data", "--config", "missing.json", "--out", "data"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_line(&out).starts_with("error code=io: "));

    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    let out = hierlearn(d, &["gen-data", "--config", "bad.json", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error code=config: "));

    std::fs::write(d.join("nested.json"), TINY.replace("\"n_per_class\": 12", "\"n_per_class\": 12, \"seed\": 5")).unwrap();
    let out = hierlearn(d, &["gen-data", "--config", "nested.json", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("dataset.seed"));

    let out = hierlearn(d, &["lr-find", "--config", "x.json", "--node", "root"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error code=usage: "));

    let out = hierlearn(d, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("train-hierarchy"));
}

#[test]
fn predict_rejects_wrong_shape() {
    let dir = staged();
    let d = dir.path();
    ok(d, &["train-hierarchy", "--config", "config.json"]);
    let other = TINY.replace("\"channels\": 1", "\"channels\": 2");
    std::fs::write(d.join("two.json"), other).unwrap();
    ok(d, &["gen-data", "--config", "two.json", "--out", "data2"]);
    let out = hierlearn(d, &["predict", "--manifest", "run/manifest.json", "--input", "data2/normal/00000.bin"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_line(&out).starts_with("error code=data: "));
}
