//! Classification metrics and the train/test and outer cross-validation
//! harnesses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{fit_cascade, predict_cascade, CascadeConfig, CascadeModel};
use crate::config::Settings;
use crate::dataset::{load_features, stratified_kfold, stratified_split, Dataset, LabelVector, SplitSpec};
use crate::error::{Error, Result};

fn check_lengths(y_true: &[usize], y_pred: &[usize]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::InvalidData("no labels to score".into()));
    }
    Ok(())
}

/// Fraction of positions where the two label sequences agree.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// `confusion[i][j]` counts rows of true class `i` predicted as `j`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    check_lengths(y_true, y_pred)?;
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (row, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        if t >= n_classes || p >= n_classes {
            return Err(Error::BadRow {
                row: row + 1,
                message: format!("label {} outside 0..{n_classes}", t.max(p)),
            });
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Accuracy read off a confusion matrix: trace over total.
pub fn confusion_accuracy(confusion: &[Vec<u64>]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = confusion.iter().enumerate().map(|(i, r)| r[i]).sum();
    trace as f64 / total as f64
}

/// Recall per class; `None` for classes absent from `y_true`.
pub fn per_class_recall(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>> {
    let m = confusion_matrix(y_true, y_pred, n_classes)?;
    Ok(m.iter()
        .enumerate()
        .map(|(i, row)| {
            let support: u64 = row.iter().sum();
            (support > 0).then(|| row[i] as f64 / support as f64)
        })
        .collect())
}

/// Mean per-class recall. Every class must occur in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    let recalls = per_class_recall(y_true, y_pred, n_classes)?;
    let mut sum = 0.0;
    for (class, r) in recalls.iter().enumerate() {
        sum += r.ok_or(Error::ClassTooSmall {
            class,
            count: 0,
            required: 1,
        })?;
    }
    Ok(sum / n_classes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Indexed like `classes`; null where the test partition lacks the class.
    pub per_class_recall: Vec<Option<f64>>,
    /// Null unless every class appears in the test partition.
    pub balanced_accuracy: Option<f64>,
    /// Test-partition confusion, rows = true class, columns = predicted.
    pub confusion: Vec<Vec<u64>>,
    pub classes: Vec<usize>,
    pub layer_accuracies: Vec<f64>,
    pub best_layer_index: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub wall_time_seconds: f64,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    #[serde(skip)]
    pub test_rows: Vec<usize>,
}

impl EvaluationReport {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| EvaluationReport {
            wall_time_seconds: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary with percentages at four decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |v: f64| format!("{:.4}%", 100.0 * v);
        let _ = writeln!(s, "train accuracy     {}", pct(self.train_accuracy));
        let _ = writeln!(s, "test accuracy      {}", pct(self.test_accuracy));
        match self.balanced_accuracy {
            Some(b) => {
                let _ = writeln!(s, "balanced accuracy  {}", pct(b));
            }
            None => {
                let _ = writeln!(s, "balanced accuracy  n/a (class missing from test set)");
            }
        }
        let _ = writeln!(
            s,
            "rows               {} train / {} test",
            self.n_train, self.n_test
        );
        let _ = writeln!(s, "layers             {}", self.layer_accuracies.len());
        for (i, a) in self.layer_accuracies.iter().enumerate() {
            let mark = if i == self.best_layer_index {
                "  <- best"
            } else {
                ""
            };
            let _ = writeln!(s, "  layer {i:<3} oof {}{mark}", pct(*a));
        }
        let _ = writeln!(s, "per-class recall");
        for (label, r) in self.classes.iter().zip(&self.per_class_recall) {
            let shown = r.map_or_else(|| "n/a".to_string(), pct);
            let _ = writeln!(s, "  class {label:<5} {shown}");
        }
        let _ = writeln!(s, "confusion (rows true, columns predicted)");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
            let _ = writeln!(s, "  {}", cells.join(""));
        }
        let _ = writeln!(s, "wall time          {:.2}s", self.wall_time_seconds);
        s
    }
}

fn flat_config(cfg: &CascadeConfig, split: &SplitSpec) -> BTreeMap<String, String> {
    let mut flat = Settings {
        cascade: cfg.clone(),
        test_fraction: split.test_fraction,
    }
    .to_flat();
    if split.seed != cfg.seed {
        flat.insert("split_seed".into(), split.seed.to_string());
    }
    flat
}

/// Dense labels in the model's class order. Labels unseen in training map to
/// `None`.
fn dense_labels(model: &CascadeModel, y: &LabelVector) -> Vec<Option<usize>> {
    let originals = model.label_mapping.originals();
    y.labels()
        .iter()
        .map(|l| originals.binary_search(l).ok())
        .collect()
}

fn fit_and_score(
    data: &Dataset,
    y: &LabelVector,
    train: &[usize],
    test: &[usize],
    cfg: &CascadeConfig,
    config: BTreeMap<String, String>,
    started: Instant,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::InvalidConfig("test partition is empty".into()));
    }
    let x_train = data.features.select_rows(train)?;
    let y_train = y.select(train);
    let model = fit_cascade(&x_train, &y_train, cfg)?;
    let k = model.n_classes;

    let train_pred = predict_cascade(&model, &x_train)?.argmax();
    let train_true: Vec<usize> = dense_labels(&model, &y_train)
        .into_iter()
        .map(|l| l.expect("seen in training"))
        .collect();
    let train_accuracy = accuracy(&train_true, &train_pred)?;

    let test_pred = predict_cascade(&model, &data.features.select_rows(test)?)?.argmax();
    let test_true = dense_labels(&model, &y.select(test));
    let test_accuracy = test_true
        .iter()
        .zip(&test_pred)
        .filter(|(t, p)| **t == Some(**p))
        .count() as f64
        / test.len() as f64;
    // Rows whose class never appeared in training cannot enter the
    // confusion matrix; the stratified split never produces them.
    let (kept_true, kept_pred): (Vec<usize>, Vec<usize>) = test_true
        .iter()
        .zip(&test_pred)
        .filter_map(|(t, p)| t.map(|t| (t, *p)))
        .unzip();
    let confusion = confusion_matrix(&kept_true, &kept_pred, k)?;
    let per_class_recall = per_class_recall(&kept_true, &kept_pred, k)?;
    let balanced_accuracy = balanced_accuracy(&kept_true, &kept_pred, k).ok();

    Ok(EvaluationReport {
        train_accuracy,
        test_accuracy,
        per_class_recall,
        balanced_accuracy,
        confusion,
        classes: model.label_mapping.originals().to_vec(),
        layer_accuracies: model.layer_accuracies(),
        best_layer_index: model.best_layer_index,
        n_train: train.len(),
        n_test: test.len(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
        config,
        test_rows: test.to_vec(),
    })
}

/// Stratified hold-out split, cascade fit on the training rows, metrics on
/// both partitions.
pub fn evaluate_dataset(data: &Dataset, cfg: &CascadeConfig, split: &SplitSpec) -> Result<EvaluationReport> {
    let started = Instant::now();
    cfg.validate()?;
    split.validate()?;
    let y = data.labels_required()?;
    let (train, test) = stratified_split(y, split)?;
    fit_and_score(data, y, &train, &test, cfg, flat_config(cfg, split), started)
}

pub fn run_experiment(
    path: impl AsRef<Path>,
    cfg: &CascadeConfig,
    split: &SplitSpec,
) -> Result<EvaluationReport> {
    let data = load_features(path, None)?;
    evaluate_dataset(&data, cfg, split)
}

/// One report per outer fold, in fold order. Each fold refits from scratch.
pub fn cross_validate_dataset(
    data: &Dataset,
    cfg: &CascadeConfig,
    k_outer: usize,
    seed: u64,
) -> Result<Vec<EvaluationReport>> {
    cfg.validate()?;
    let y = data.labels_required()?;
    let folds = stratified_kfold(y, k_outer, seed)?;
    let mut config = flat_config(
        cfg,
        &SplitSpec {
            test_fraction: 1.0 / k_outer as f64,
            seed: cfg.seed,
        },
    );
    config.remove("test_fraction");
    config.insert("outer_folds".into(), k_outer.to_string());
    config.insert("outer_seed".into(), seed.to_string());
    (0..k_outer)
        .into_par_iter()
        .map(|f| {
            let started = Instant::now();
            let mut config = config.clone();
            config.insert("outer_fold".into(), f.to_string());
            fit_and_score(
                data,
                y,
                &folds.train_rows(f),
                &folds.test_rows(f),
                cfg,
                config,
                started,
            )
        })
        .collect()
}

pub fn outer_cross_validate(
    path: impl AsRef<Path>,
    cfg: &CascadeConfig,
    k_outer: usize,
    seed: u64,
) -> Result<Vec<EvaluationReport>> {
    let data = load_features(path, None)?;
    cross_validate_dataset(&data, cfg, k_outer, seed)
}

/// Mean and sample standard deviation of test accuracy across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvSummary {
    pub folds: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

pub fn summarize(reports: &[EvaluationReport]) -> CvSummary {
    let n = reports.len() as f64;
    let mean = reports.iter().map(|r| r.test_accuracy).sum::<f64>() / n;
    let var = if reports.len() > 1 {
        reports
            .iter()
            .map(|r| (r.test_accuracy - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    CvSummary {
        folds: reports.len(),
        mean_test_accuracy: mean,
        std_test_accuracy: var.sqrt(),
    }
}
