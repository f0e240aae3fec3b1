use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn deepforest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepforest"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three well-separated classes, 6 rows each, over `d` features.
fn labelled_csv(d: usize, with_labels: bool) -> String {
    let mut text = String::from("id");
    for j in 0..d {
        text.push_str(&format!(",f{j}"));
    }
    text.push_str(if with_labels { ",label\n" } else { "\n" });
    for i in 0..18 {
        let c = i % 3;
        text.push_str(&format!("s{i}"));
        for j in 0..d {
            text.push_str(&format!(
                ",{}",
                c as f64 * 5.0 + ((i * 7 + j * 3) % 5) as f64 * 0.1
            ));
        }
        if with_labels {
            text.push_str(&format!(",{c}"));
        }
        text.push('\n');
    }
    text
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn config(&self) -> PathBuf {
        self.write(
            "fast.cfg",
            "# small ensembles keep tests quick\nk_folds = 3\nmax_layers = 2\nrandom_forest.n_trees = 5\nextra_trees.n_trees = 5\nboosted.n_rounds = 5\n",
        )
    }

    fn trained(&self, d: usize) -> PathBuf {
        let data = self.write("train.csv", &labelled_csv(d, true));
        let model = self.path("m.gcfm");
        let o = deepforest(&[
            "train",
            "--features",
            s(&data),
            "--model",
            s(&model),
            "--config",
            s(&self.config()),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        model
    }
}

#[test]
fn train_reports_layers_and_writes_model() {
    let f = Fixture::new();
    let data = f.write("train.csv", &labelled_csv(4, true));
    let model = f.path("m.gcfm");
    let o = deepforest(&[
        "train",
        "--features",
        s(&data),
        "--model",
        s(&model),
        "--config",
        s(&f.config()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("layer 0"), "{out}");
    assert!(out.contains("oof accuracy"), "{out}");
    assert!(std::fs::read(&model).unwrap().starts_with(b"GCFM"));
}

#[test]
fn train_without_labels_fails() {
    let f = Fixture::new();
    let data = f.write("nolabels.csv", &labelled_csv(4, false));
    let model = f.path("m.gcfm");
    let o = deepforest(&["train", "--features", s(&data), "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("labels required"), "{}", stderr(&o));
    assert!(!model.exists());
}

#[test]
fn train_into_missing_directory_leaves_nothing() {
    let f = Fixture::new();
    let data = f.write("train.csv", &labelled_csv(3, true));
    let model = f.path("missing").join("m.gcfm");
    let o = deepforest(&[
        "train",
        "--features",
        s(&data),
        "--model",
        s(&model),
        "--config",
        s(&f.config()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let entries: Vec<_> = std::fs::read_dir(f.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
}

#[test]
fn predict_writes_one_distribution_per_row_deterministically() {
    let f = Fixture::new();
    let model = f.trained(4);
    let probe = f.write("probe.csv", &labelled_csv(4, false));
    let (a, b) = (f.path("a.csv"), f.path("b.csv"));
    for out in [&a, &b] {
        let o = deepforest(&[
            "predict",
            "--model",
            s(&model),
            "--features",
            s(&probe),
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,predicted_label,p0,p1,p2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 18);
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0], format!("s{i}"));
        assert_eq!(cells[1], (i % 3).to_string());
        let total: f64 = cells[2..].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn predict_rejects_wrong_width() {
    let f = Fixture::new();
    let model = f.trained(4);
    let probe = f.write("narrow.csv", &labelled_csv(2, false));
    let out = f.path("p.csv");
    let o = deepforest(&[
        "predict",
        "--model",
        s(&model),
        "--features",
        s(&probe),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected 4 features"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn evaluate_echoes_effective_config() {
    let f = Fixture::new();
    let data = f.write("train.csv", &labelled_csv(3, true));
    let report = f.path("report.json");
    let o = deepforest(&[
        "evaluate",
        "--features",
        s(&data),
        "--config",
        s(&f.config()),
        "--test-fraction",
        "0.1",
        "--seed",
        "9",
        "--max-layers",
        "1",
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("test accuracy"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["config"]["test_fraction"], "0.1");
    // flag beats file
    assert_eq!(json["config"]["max_layers"], "1");
    // file beats default
    assert_eq!(json["config"]["k_folds"], "3");
    assert_eq!(json["seed"], 9);
    for key in [
        "train_accuracy",
        "test_accuracy",
        "balanced_accuracy",
        "confusion",
        "layer_accuracies",
        "best_layer_index",
        "wall_time_seconds",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn evaluate_without_labels_fails() {
    let f = Fixture::new();
    let data = f.write("nolabels.csv", &labelled_csv(3, false));
    let o = deepforest(&["evaluate", "--features", s(&data)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn cv_reports_every_fold() {
    let f = Fixture::new();
    let data = f.write("train.csv", &labelled_csv(3, true));
    let o = deepforest(&[
        "cv",
        "--features",
        s(&data),
        "--config",
        s(&f.config()),
        "--outer-folds",
        "3",
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let folds = json["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 3);
    let tested: u64 = folds.iter().map(|r| r["n_test"].as_u64().unwrap()).sum();
    assert_eq!(tested, 18);
    assert!(json["summary"]["mean_test_accuracy"].as_f64().is_some());
}

#[test]
fn inspect_reads_only_the_model() {
    let f = Fixture::new();
    let model = f.trained(4);
    std::fs::remove_file(f.path("train.csv")).unwrap();
    let o = deepforest(&["inspect", "--model", s(&model), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["base_dim"], 4);
    assert_eq!(json["augmented_dim"], 16);
    assert_eq!(json["n_classes"], 3);
    let o = deepforest(&["inspect", "--model", s(&model)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("best layer"));
}

#[test]
fn inspect_rejects_corrupt_model() {
    let f = Fixture::new();
    let model = f.trained(4);
    let mut bytes = std::fs::read(&model).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&model, bytes).unwrap();
    let o = deepforest(&["inspect", "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn convert_round_trips() {
    let f = Fixture::new();
    let csv = f.write("x.csv", "id,f0,f1,label\na,0.5,-1.25,0\nb,3,4,1\nc,1e-3,7.5,1\n");
    let (bin, back, bin2) = (f.path("x.bin"), f.path("back.csv"), f.path("x2.bin"));
    assert!(deepforest(&["convert", "--features", s(&csv), "--out", s(&bin)])
        .status
        .success());
    let bytes = std::fs::read(&bin).unwrap();
    assert_eq!(&bytes[..5], b"GCFV\x01");
    assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 2);
    assert_eq!(bytes[13], 1);
    assert!(deepforest(&["convert", "--features", s(&bin), "--out", s(&back)])
        .status
        .success());
    assert!(deepforest(&[
        "convert",
        "--features",
        s(&back),
        "--out",
        s(&bin2),
        "--to",
        "binary"
    ])
    .status
    .success());
    assert_eq!(std::fs::read(&bin2).unwrap(), bytes);
    assert!(std::fs::read_to_string(&back).unwrap().contains("0.001"));
}

#[test]
fn convert_reports_bad_input() {
    let f = Fixture::new();
    let empty = f.write("empty.csv", "");
    let out = f.path("o.bin");
    assert_eq!(
        deepforest(&["convert", "--features", s(&empty), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
    let bad = f.write("bad.csv", "id,f0\na,1\nb,NaN\n");
    let o = deepforest(&["convert", "--features", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
    assert!(!out.exists());
}
