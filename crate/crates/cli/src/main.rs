use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deepforest::cascade::{fit_cascade_with, load_model, predict_cascade, save_model, CascadeModel};
use deepforest::config::Settings;
use deepforest::dataset::{
    encode_binary, format_csv, load_features, CsvPrecision, Dataset, FeatureFormat, LabelVector,
};
use deepforest::evaluation::{cross_validate_dataset, evaluate_dataset, summarize};
use deepforest::write_atomic;

#[derive(Parser)]
#[command(
    name = "deepforest",
    version,
    about = "Cascade forest classifier for fixed-width feature vectors"
)]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a cascade on a labeled feature file and save the model
    Train {
        #[command(flatten)]
        input: FeatureArgs,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        tune: TuneArgs,
    },
    /// Write `id,predicted_label,p0..` for every row of a feature file
    Predict {
        #[command(flatten)]
        input: FeatureArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified hold-out split, fit on train, report both partitions
    Evaluate {
        #[command(flatten)]
        input: FeatureArgs,
        #[command(flatten)]
        tune: TuneArgs,
        /// Write the machine-readable report here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON report instead of the text summary
        #[arg(long)]
        json: bool,
    },
    /// Outer stratified cross-validation
    Cv {
        #[command(flatten)]
        input: FeatureArgs,
        #[command(flatten)]
        tune: TuneArgs,
        #[arg(long, default_value_t = 5)]
        outer_folds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print model metadata
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Convert between CSV and binary feature files
    Convert {
        #[command(flatten)]
        input: FeatureArgs,
        #[arg(long)]
        out: PathBuf,
        /// Target format; defaults to the opposite of the input's
        #[arg(long, value_enum)]
        to: Option<Format>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

impl From<Format> for FeatureFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => FeatureFormat::Csv,
            Format::Binary => FeatureFormat::Binary,
        }
    }
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long)]
    features: PathBuf,
    /// Input format; detected from the file when omitted
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl FeatureArgs {
    fn load(&self) -> Result<Dataset> {
        load_features(&self.features, self.format.map(Into::into))
            .with_context(|| format!("reading {}", self.features.display()))
    }
}

#[derive(Args)]
struct TuneArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Folds used for out-of-fold class vectors inside each layer
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    max_layers: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Extra `key=value` overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl TuneArgs {
    /// Defaults, then the config file, then flags.
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            s.apply_text(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            s.set(k.trim(), v)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("test_fraction", self.test_fraction.map(|v| v.to_string())),
            ("k_folds", self.folds.map(|v| v.to_string())),
            ("max_layers", self.max_layers.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, &v)?;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

fn pct(v: f64) -> String {
    format!("{:.4}%", 100.0 * v)
}

fn train(input: &FeatureArgs, model_path: &Path, tune: &TuneArgs) -> Result<()> {
    let settings = tune.settings()?;
    let data = input.load()?;
    let y = data.labels_required()?;
    let model = fit_cascade_with(&data.features, y, &settings.cascade, |p| {
        let parts: Vec<String> = ["rf", "et", "gb", "lr"]
            .iter()
            .zip(p.learner_accuracies)
            .map(|(name, a)| format!("{name} {}", pct(a)))
            .collect();
        println!(
            "layer {:<2} input {:>5}  oof accuracy {}  ({})",
            p.layer,
            p.input_dim,
            pct(p.accuracy),
            parts.join(", ")
        );
    })?;
    save_model(&model, model_path).with_context(|| format!("writing {}", model_path.display()))?;
    println!(
        "best layer {} ({}); model written to {}",
        model.best_layer_index,
        pct(model.layers[model.best_layer_index].accuracy),
        model_path.display()
    );
    Ok(())
}

fn predict(input: &FeatureArgs, model_path: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let data = input.load()?;
    let proba = predict_cascade(&model, &data.features)?;
    let mut text = String::from("id,predicted_label");
    for j in 0..model.n_classes {
        text.push_str(&format!(",p{j}"));
    }
    text.push('\n');
    for (i, row) in proba.rows().enumerate() {
        let label = model.label_mapping.original(deepforest::learners::argmax(row));
        text.push_str(&format!("{},{label}", data.ids[i]));
        for p in row {
            text.push_str(&format!(",{p}"));
        }
        text.push('\n');
    }
    write_atomic(out, text.as_bytes()).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn evaluate(input: &FeatureArgs, tune: &TuneArgs, out: Option<&Path>, json: bool) -> Result<()> {
    let settings = tune.settings()?;
    let data = input.load()?;
    let report = evaluate_dataset(&data, &settings.cascade, &settings.split_spec())?;
    let machine = report.to_json();
    if let Some(path) = out {
        write_atomic(path, format!("{machine}\n").as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        println!("{machine}");
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn cross_validate(
    input: &FeatureArgs,
    tune: &TuneArgs,
    outer: usize,
    out: Option<&Path>,
    json: bool,
) -> Result<()> {
    let settings = tune.settings()?;
    let data = input.load()?;
    let reports = cross_validate_dataset(&data, &settings.cascade, outer, settings.cascade.seed)?;
    let summary = summarize(&reports);
    let machine = serde_json::to_string_pretty(&serde_json::json!({
        "summary": summary,
        "folds": reports,
    }))?;
    if let Some(path) = out {
        write_atomic(path, format!("{machine}\n").as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        println!("{machine}");
        return Ok(());
    }
    for (f, r) in reports.iter().enumerate() {
        println!(
            "fold {f}: train {}  test {}  layers {}  best {}",
            pct(r.train_accuracy),
            pct(r.test_accuracy),
            r.layer_accuracies.len(),
            r.best_layer_index
        );
    }
    println!(
        "test accuracy {} ± {} over {} folds",
        pct(summary.mean_test_accuracy),
        pct(summary.std_test_accuracy),
        summary.folds
    );
    Ok(())
}

fn inspect(model_path: &Path, json: bool) -> Result<()> {
    let model: CascadeModel =
        load_model(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let config = Settings {
        cascade: model.config.clone(),
        ..Settings::default()
    }
    .to_flat();
    let layers: Vec<serde_json::Value> = model
        .layers
        .iter()
        .map(|l| {
            serde_json::json!({
                "input_dim": l.input_dim,
                "oof_accuracy": l.accuracy,
                "fold_models": l.ensembles.iter().map(|e| e.models().len()).collect::<Vec<_>>(),
            })
        })
        .collect();
    if json {
        let mut cascade_config = config;
        cascade_config.remove("test_fraction");
        let doc = serde_json::json!({
            "base_dim": model.base_dim,
            "augmented_dim": model.augmented_dim(),
            "n_classes": model.n_classes,
            "classes": model.label_mapping.originals(),
            "best_layer_index": model.best_layer_index,
            "layer_accuracies": model.layer_accuracies(),
            "layers": layers,
            "config": cascade_config,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    println!("input dim      {}", model.base_dim);
    println!("augmented dim  {}", model.augmented_dim());
    println!(
        "classes        {} {:?}",
        model.n_classes,
        model.label_mapping.originals()
    );
    println!("layers         {}", model.layers.len());
    for (i, l) in model.layers.iter().enumerate() {
        let mark = if i == model.best_layer_index {
            "  <- best"
        } else {
            ""
        };
        println!(
            "  layer {i:<3} input {:>5}  oof {}{mark}",
            l.input_dim,
            pct(l.accuracy)
        );
    }
    println!("best layer     {}", model.best_layer_index);
    println!("config");
    for (k, v) in config.iter().filter(|(k, _)| k.as_str() != "test_fraction") {
        println!("  {k} = {v}");
    }
    Ok(())
}

fn convert(input: &FeatureArgs, out: &Path, to: Option<Format>) -> Result<()> {
    let bytes = fs::read(&input.features).with_context(|| format!("reading {}", input.features.display()))?;
    let source = input
        .format
        .map(Into::into)
        .unwrap_or_else(|| FeatureFormat::detect(&bytes));
    let data = input.load()?;
    let target = to.map(Into::into).unwrap_or(match source {
        FeatureFormat::Csv => FeatureFormat::Binary,
        FeatureFormat::Binary => FeatureFormat::Csv,
    });
    let encoded = match target {
        FeatureFormat::Binary => encode_binary(&data)?,
        FeatureFormat::Csv => {
            let precision = match source {
                FeatureFormat::Binary => CsvPrecision::Single,
                FeatureFormat::Csv => CsvPrecision::Double,
            };
            format_csv(&data, precision)?
        }
    };
    write_atomic(out, &encoded).with_context(|| format!("writing {}", out.display()))?;
    let labels = data.labels.as_ref().map_or(0, LabelVector::len);
    println!(
        "wrote {} rows x {} features{} to {}",
        data.features.n_rows(),
        data.features.n_cols(),
        if labels > 0 { " with labels" } else { "" },
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { input, model, tune } => train(input, model, tune),
        Command::Predict { input, model, out } => predict(input, model, out),
        Command::Evaluate {
            input,
            tune,
            out,
            json,
        } => evaluate(input, tune, out.as_deref(), *json),
        Command::Cv {
            input,
            tune,
            outer_folds,
            out,
            json,
        } => cross_validate(input, tune, *outer_folds, out.as_deref(), *json),
        Command::Inspect { model, json } => inspect(model, *json),
        Command::Convert { input, out, to } => convert(input, out, *to),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
