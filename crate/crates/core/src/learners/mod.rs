//! The four probabilistic base learners of a cascade layer.
//!
//! Every learner is fitted on a `(FeatureMatrix, LabelVector)` pair and
//! emits row-stochastic [`ClassProbabilities`].

mod boosting;
mod forest;
pub mod logistic;
mod proba;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};

pub use boosting::{fit_boosted_trees, BoostedTrees};
pub use forest::{fit_extra_trees, fit_random_forest, Forest};
pub use logistic::{fit_logistic, LogisticModel};
pub use proba::{argmax, ClassProbabilities, SIMPLEX_TOLERANCE};
pub use tree::{fit_tree, ClassTree, Node, RegressionTree, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    RandomForest,
    ExtraTrees,
    BoostedTrees,
    Logistic,
}

impl LearnerKind {
    /// Position of each learner inside a cascade layer.
    pub const LAYER_ORDER: [LearnerKind; 4] = [
        LearnerKind::RandomForest,
        LearnerKind::ExtraTrees,
        LearnerKind::BoostedTrees,
        LearnerKind::Logistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::ExtraTrees => "extra_trees",
            LearnerKind::BoostedTrees => "boosted_trees",
            LearnerKind::Logistic => "logistic",
        }
    }

    pub fn default_config(self) -> LearnerConfig {
        match self {
            LearnerKind::RandomForest => LearnerConfig::random_forest(),
            LearnerKind::ExtraTrees => LearnerConfig::extra_trees(),
            LearnerKind::BoostedTrees => LearnerConfig::boosted_trees(),
            LearnerKind::Logistic => LearnerConfig::logistic(),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_forest" => Ok(LearnerKind::RandomForest),
            "extra_trees" => Ok(LearnerKind::ExtraTrees),
            "boosted_trees" | "boosted" => Ok(LearnerKind::BoostedTrees),
            "logistic" => Ok(LearnerKind::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown learner kind `{other}`"))),
        }
    }
}

/// Candidate features examined at each tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(c) => c.min(n_features),
        };
        m.max(1)
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::All => f.write_str("all"),
            MaxFeatures::Count(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" => Ok(MaxFeatures::All),
            n => n
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .map(MaxFeatures::Count)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "max_features must be sqrt, all or a positive count, got `{n}`"
                    ))
                }),
        }
    }
}

/// Hyperparameters shared by all learner kinds; each kind reads the fields
/// that apply to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    /// Random forest only.
    pub bootstrap: bool,
    pub learning_rate: f64,
    pub n_rounds: usize,
    pub l2_penalty: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn random_forest() -> Self {
        LearnerConfig {
            kind: LearnerKind::RandomForest,
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            learning_rate: 0.1,
            n_rounds: 50,
            l2_penalty: 0.0,
            max_iterations: 300,
            seed: 0,
        }
    }

    pub fn extra_trees() -> Self {
        LearnerConfig {
            kind: LearnerKind::ExtraTrees,
            bootstrap: false,
            ..Self::random_forest()
        }
    }

    pub fn boosted_trees() -> Self {
        LearnerConfig {
            kind: LearnerKind::BoostedTrees,
            n_trees: 1,
            max_depth: Some(3),
            max_features: MaxFeatures::All,
            bootstrap: false,
            learning_rate: 0.1,
            n_rounds: 50,
            l2_penalty: 1.0,
            ..Self::random_forest()
        }
    }

    pub fn logistic() -> Self {
        LearnerConfig {
            kind: LearnerKind::Logistic,
            n_trees: 1,
            max_features: MaxFeatures::All,
            bootstrap: false,
            l2_penalty: 0.01,
            max_iterations: 300,
            ..Self::random_forest()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.kind)));
        match self.kind {
            LearnerKind::RandomForest | LearnerKind::ExtraTrees if self.n_trees == 0 => {
                return bad("n_trees must be at least 1".into())
            }
            LearnerKind::BoostedTrees if self.n_rounds == 0 => {
                return bad("n_rounds must be at least 1".into())
            }
            // A zero rate is accepted: it is the null-update boundary case.
            LearnerKind::BoostedTrees if !(0.0..=1.0).contains(&self.learning_rate) => {
                return bad(format!(
                    "learning_rate must lie in [0, 1], got {}",
                    self.learning_rate
                ))
            }
            _ => {}
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return bad(format!(
                "l2_penalty must be finite and >= 0, got {}",
                self.l2_penalty
            ));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return bad("max_features count must be positive".into());
        }
        Ok(())
    }

    fn expect_kind(&self, kind: LearnerKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidConfig(format!(
                "expected a {kind} config, got {}",
                self.kind
            )));
        }
        self.validate()
    }
}

/// Anything that maps feature rows onto class distributions.
pub trait Classifier {
    fn n_features(&self) -> usize;

    fn n_classes(&self) -> usize;

    /// Writes the class distribution of one row into `out`.
    fn predict_row(&self, row: &[f64], out: &mut [f64]);

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<ClassProbabilities> {
        if x.n_cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        let k = self.n_classes();
        let mut values = vec![0.0; x.n_rows() * k];
        for (row, out) in x.rows().zip(values.chunks_exact_mut(k)) {
            self.predict_row(row, out);
            for p in out.iter_mut() {
                *p = p.clamp(0.0, 1.0);
            }
        }
        Ok(ClassProbabilities::from_raw(x.n_rows(), k, values))
    }
}

/// A fitted learner of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedLearner {
    RandomForest(Forest),
    ExtraTrees(Forest),
    BoostedTrees(BoostedTrees),
    Logistic(LogisticModel),
}

impl FittedLearner {
    pub fn kind(&self) -> LearnerKind {
        match self {
            FittedLearner::RandomForest(_) => LearnerKind::RandomForest,
            FittedLearner::ExtraTrees(_) => LearnerKind::ExtraTrees,
            FittedLearner::BoostedTrees(_) => LearnerKind::BoostedTrees,
            FittedLearner::Logistic(_) => LearnerKind::Logistic,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            FittedLearner::RandomForest(m) | FittedLearner::ExtraTrees(m) => m,
            FittedLearner::BoostedTrees(m) => m,
            FittedLearner::Logistic(m) => m,
        }
    }
}

impl Classifier for FittedLearner {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }

    fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        self.inner().predict_row(row, out)
    }
}

/// Fits the learner named by `cfg.kind`.
pub fn fit_learner(x: &FeatureMatrix, y: &LabelVector, cfg: &LearnerConfig) -> Result<FittedLearner> {
    Ok(match cfg.kind {
        LearnerKind::RandomForest => FittedLearner::RandomForest(fit_random_forest(x, y, cfg)?),
        LearnerKind::ExtraTrees => FittedLearner::ExtraTrees(fit_extra_trees(x, y, cfg)?),
        LearnerKind::BoostedTrees => FittedLearner::BoostedTrees(fit_boosted_trees(x, y, cfg)?),
        LearnerKind::Logistic => FittedLearner::Logistic(fit_logistic(x, y, cfg)?),
    })
}
