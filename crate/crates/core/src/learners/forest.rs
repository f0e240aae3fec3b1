use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::learners::tree::{check_xy, grow_class_tree, tree_rng, GrowParams};
use crate::learners::{ClassTree, Classifier, LearnerConfig, LearnerKind};

/// Averaging ensemble of classification trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    n_features: usize,
    n_classes: usize,
    trees: Vec<ClassTree>,
}

impl Forest {
    pub fn from_trees(trees: Vec<ClassTree>, n_features: usize, n_classes: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidData("forest has no trees".into()));
        }
        for tree in &trees {
            if tree.n_features() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: tree.n_features(),
                });
            }
        }
        Ok(Forest {
            n_features,
            n_classes,
            trees,
        })
    }

    pub fn trees(&self) -> &[ClassTree] {
        &self.trees
    }
}

impl Classifier for Forest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for tree in &self.trees {
            for (acc, p) in out.iter_mut().zip(tree.leaf(row)) {
                *acc += p;
            }
        }
        let scale = 1.0 / self.trees.len() as f64;
        out.iter_mut().for_each(|p| *p *= scale);
    }
}

fn fit_forest(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &LearnerConfig,
    bootstrap: bool,
    random_thresholds: bool,
) -> Result<Forest> {
    check_xy(x, y)?;
    let n = x.n_rows();
    let params = GrowParams::from_config(cfg, x.n_cols(), random_thresholds);
    let ones = vec![1.0; n];
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let rows = if bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_class_tree(x, y, rows, &ones, params, &mut rng)
        })
        .collect();
    Forest::from_trees(trees, x.n_cols(), y.n_classes())
}

/// Bagged CART trees over `max_features` random candidates per split.
/// Bootstrap resampling can be switched off through `cfg.bootstrap`.
pub fn fit_random_forest(x: &FeatureMatrix, y: &LabelVector, cfg: &LearnerConfig) -> Result<Forest> {
    cfg.expect_kind(LearnerKind::RandomForest)?;
    fit_forest(x, y, cfg, cfg.bootstrap, false)
}

/// Extremely randomized trees: every tree sees all rows and each candidate
/// feature gets a single threshold drawn uniformly over the node's range.
pub fn fit_extra_trees(x: &FeatureMatrix, y: &LabelVector, cfg: &LearnerConfig) -> Result<Forest> {
    cfg.expect_kind(LearnerKind::ExtraTrees)?;
    fit_forest(x, y, cfg, false, true)
}
