//! The cascade: layers of four fold-ensembles, each layer's out-of-fold
//! class probabilities appended to the original features for the next.

mod growth;
mod persist;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_kfold, FeatureMatrix, FoldAssignment, LabelMapping, LabelVector};
use crate::error::{Error, Result};
use crate::evaluation::accuracy;
use crate::learners::{
    fit_learner, ClassProbabilities, Classifier, FittedLearner, LearnerConfig, LearnerKind,
};
use crate::rng::derive_seed;

pub use growth::{best_layer_index, replay_growth, GrowthController};
pub use persist::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

/// Learners per layer.
pub const N_LEARNERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub k_folds: usize,
    /// In layer order: random forest, extra trees, boosted trees, logistic.
    pub learners: [LearnerConfig; N_LEARNERS],
    pub max_layers: usize,
    pub patience: usize,
    pub improvement_epsilon: f64,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            k_folds: 5,
            learners: LearnerKind::LAYER_ORDER.map(LearnerKind::default_config),
            max_layers: 10,
            patience: 1,
            improvement_epsilon: 0.0,
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "k_folds must be >= 2, got {}",
                self.k_folds
            )));
        }
        if self.max_layers == 0 {
            return Err(Error::InvalidConfig("max_layers must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if !(self.improvement_epsilon.is_finite() && self.improvement_epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "improvement_epsilon must be finite and >= 0, got {}",
                self.improvement_epsilon
            )));
        }
        for (cfg, kind) in self.learners.iter().zip(LearnerKind::LAYER_ORDER) {
            if cfg.kind != kind {
                return Err(Error::InvalidConfig(format!(
                    "learner slot for {kind} holds a {} config",
                    cfg.kind
                )));
            }
            cfg.validate()?;
        }
        Ok(())
    }
}

/// The `k` fold-models of one learner; predicts with their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEnsemble {
    models: Vec<FittedLearner>,
}

impl FoldEnsemble {
    pub fn new(models: Vec<FittedLearner>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidData("fold ensemble without models".into()))?;
        for m in &models {
            if m.kind() != first.kind()
                || m.n_features() != first.n_features()
                || m.n_classes() != first.n_classes()
            {
                return Err(Error::InvalidData("fold models disagree in kind or shape".into()));
            }
        }
        Ok(FoldEnsemble { models })
    }

    pub fn kind(&self) -> LearnerKind {
        self.models[0].kind()
    }

    pub fn models(&self) -> &[FittedLearner] {
        &self.models
    }
}

impl Classifier for FoldEnsemble {
    fn n_features(&self) -> usize {
        self.models[0].n_features()
    }

    fn n_classes(&self) -> usize {
        self.models[0].n_classes()
    }

    fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        let mut scratch = vec![0.0; out.len()];
        out.fill(0.0);
        for m in &self.models {
            m.predict_row(row, &mut scratch);
            out.iter_mut().zip(&scratch).for_each(|(o, s)| *o += s);
        }
        let scale = 1.0 / self.models.len() as f64;
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeLayer {
    pub ensembles: Vec<FoldEnsemble>,
    /// Out-of-fold accuracy on the training set.
    pub accuracy: f64,
    pub input_dim: usize,
}

impl CascadeLayer {
    fn predict_blocks(&self, input: &FeatureMatrix) -> Result<Vec<ClassProbabilities>> {
        self.ensembles
            .par_iter()
            .map(|e| e.predict_proba(input))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub config: CascadeConfig,
    pub label_mapping: LabelMapping,
    pub base_dim: usize,
    pub n_classes: usize,
    pub layers: Vec<CascadeLayer>,
    pub best_layer_index: usize,
}

impl CascadeModel {
    pub fn layer_accuracies(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.accuracy).collect()
    }

    /// Input width of layers after the first.
    pub fn augmented_dim(&self) -> usize {
        self.base_dim + N_LEARNERS * self.n_classes
    }

    /// Checks the structural invariants; used after decoding.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidData("cascade has no layers".into()));
        }
        if self.layers.len() > self.config.max_layers {
            return Err(Error::InvalidData("more layers than max_layers".into()));
        }
        if self.label_mapping.n_classes() != self.n_classes {
            return Err(Error::InvalidData(
                "label mapping size differs from n_classes".into(),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let expected = if l == 0 {
                self.base_dim
            } else {
                self.augmented_dim()
            };
            if layer.input_dim != expected || layer.ensembles.len() != N_LEARNERS {
                return Err(Error::InvalidData(format!("layer {l} has the wrong shape")));
            }
            for (e, kind) in layer.ensembles.iter().zip(LearnerKind::LAYER_ORDER) {
                if e.kind() != kind || e.n_features() != expected || e.n_classes() != self.n_classes {
                    return Err(Error::InvalidData(format!(
                        "layer {l} {kind} ensemble has the wrong shape"
                    )));
                }
            }
        }
        if best_layer_index(&self.layer_accuracies()) != Some(self.best_layer_index) {
            return Err(Error::InvalidData(
                "best_layer_index is not the argmax of the layer accuracies".into(),
            ));
        }
        Ok(())
    }
}

/// Appends the four probability blocks, in layer order, to the base features.
pub fn augment_features(base: &FeatureMatrix, blocks: &[ClassProbabilities]) -> Result<FeatureMatrix> {
    if blocks.len() != N_LEARNERS {
        return Err(Error::InvalidData(format!(
            "expected {N_LEARNERS} probability blocks, got {}",
            blocks.len()
        )));
    }
    for b in blocks {
        if b.n_rows() != base.n_rows() {
            return Err(Error::LengthMismatch {
                left: base.n_rows(),
                right: b.n_rows(),
            });
        }
    }
    let width = base.n_cols() + blocks.iter().map(|b| b.n_classes()).sum::<usize>();
    let mut values = Vec::with_capacity(base.n_rows() * width);
    for (i, row) in base.rows().enumerate() {
        values.extend_from_slice(row);
        for b in blocks {
            values.extend_from_slice(b.row(i));
        }
    }
    FeatureMatrix::new(base.n_rows(), width, values)
}

/// Fits one model per fold on the rows outside it and predicts the rows
/// inside it. Fold `f` uses the seed `derive_seed(cfg.seed, [f])`.
pub fn oof_probabilities(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &LearnerConfig,
    folds: &FoldAssignment,
) -> Result<(ClassProbabilities, Vec<FittedLearner>)> {
    if folds.len() != x.n_rows() || y.len() != x.n_rows() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: folds.len(),
        });
    }
    let k = y.n_classes();
    let fitted: Vec<(Vec<usize>, ClassProbabilities, FittedLearner)> = (0..folds.k())
        .into_par_iter()
        .map(|f| {
            let held_out = folds.test_rows(f);
            let train = folds.train_rows(f);
            if held_out.is_empty() || train.is_empty() {
                return Err(Error::InvalidData(format!(
                    "fold {f} is empty or covers every row"
                )));
            }
            let fold_cfg = LearnerConfig {
                seed: derive_seed(cfg.seed, &[f as u64]),
                ..cfg.clone()
            };
            let model = fit_learner(&x.select_rows(&train)?, &y.select(&train), &fold_cfg)?;
            let probs = model.predict_proba(&x.select_rows(&held_out)?)?;
            Ok((held_out, probs, model))
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; x.n_rows() * k];
    let mut models = Vec::with_capacity(fitted.len());
    for (held_out, probs, model) in fitted {
        for (j, &row) in held_out.iter().enumerate() {
            values[row * k..(row + 1) * k].copy_from_slice(probs.row(j));
        }
        models.push(model);
    }
    Ok((ClassProbabilities::from_raw(x.n_rows(), k, values), models))
}

/// Progress record handed to the observer after each layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerProgress {
    pub layer: usize,
    pub input_dim: usize,
    pub accuracy: f64,
    pub learner_accuracies: [f64; N_LEARNERS],
}

pub fn fit_cascade(x: &FeatureMatrix, y: &LabelVector, cfg: &CascadeConfig) -> Result<CascadeModel> {
    fit_cascade_with(x, y, cfg, |_| {})
}

/// Grows the cascade, calling `on_layer` as each layer completes.
pub fn fit_cascade_with(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &CascadeConfig,
    mut on_layer: impl FnMut(&LayerProgress),
) -> Result<CascadeModel> {
    cfg.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    let (label_mapping, y) = LabelMapping::fit(y)?;
    let n_classes = y.n_classes();
    let folds = stratified_kfold(&y, cfg.k_folds, derive_seed(cfg.seed, &[0xf01d]))?;

    let mut controller = GrowthController::new(cfg.patience, cfg.improvement_epsilon, cfg.max_layers);
    let mut layers = Vec::new();
    let mut input = x.clone();
    loop {
        let layer = layers.len();
        let results: Vec<(ClassProbabilities, Vec<FittedLearner>)> = cfg
            .learners
            .par_iter()
            .enumerate()
            .map(|(slot, learner)| {
                let learner = LearnerConfig {
                    seed: derive_seed(cfg.seed, &[layer as u64, slot as u64, learner.seed]),
                    ..learner.clone()
                };
                oof_probabilities(&input, &y, &learner, &folds)
            })
            .collect::<Result<_>>()?;

        let mut blocks = Vec::with_capacity(N_LEARNERS);
        let mut ensembles = Vec::with_capacity(N_LEARNERS);
        for (probs, models) in results {
            blocks.push(probs);
            ensembles.push(FoldEnsemble::new(models)?);
        }
        let block_refs: Vec<&ClassProbabilities> = blocks.iter().collect();
        let layer_accuracy = accuracy(y.labels(), &ClassProbabilities::mean(&block_refs)?.argmax())?;
        let mut learner_accuracies = [0.0; N_LEARNERS];
        for (acc, b) in learner_accuracies.iter_mut().zip(&blocks) {
            *acc = accuracy(y.labels(), &b.argmax())?;
        }
        on_layer(&LayerProgress {
            layer,
            input_dim: input.n_cols(),
            accuracy: layer_accuracy,
            learner_accuracies,
        });
        layers.push(CascadeLayer {
            ensembles,
            accuracy: layer_accuracy,
            input_dim: input.n_cols(),
        });
        if !controller.observe(layer_accuracy) {
            break;
        }
        input = augment_features(x, &blocks)?;
    }

    let model = CascadeModel {
        config: cfg.clone(),
        label_mapping,
        base_dim: x.n_cols(),
        n_classes,
        best_layer_index: controller.best_layer().expect("at least one layer"),
        layers,
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

/// Class probabilities (dense class order) from the best layer, with every
/// ensemble predicting through the mean of its fold-models.
pub fn predict_cascade(model: &CascadeModel, x: &FeatureMatrix) -> Result<ClassProbabilities> {
    if x.n_cols() != model.base_dim {
        return Err(Error::DimensionMismatch {
            expected: model.base_dim,
            got: x.n_cols(),
        });
    }
    let mut input = x.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        let blocks = layer.predict_blocks(&input)?;
        if l == model.best_layer_index {
            let refs: Vec<&ClassProbabilities> = blocks.iter().collect();
            return ClassProbabilities::mean(&refs);
        }
        input = augment_features(x, &blocks)?;
    }
    Err(Error::InvalidData("best layer index beyond stored layers".into()))
}

/// Argmax labels, mapped back to the labels seen during training.
pub fn predict_labels(model: &CascadeModel, x: &FeatureMatrix) -> Result<LabelVector> {
    let dense = predict_cascade(model, x)?.argmax();
    LabelVector::from_labels(
        dense
            .into_iter()
            .map(|c| model.label_mapping.original(c))
            .collect(),
    )
}
