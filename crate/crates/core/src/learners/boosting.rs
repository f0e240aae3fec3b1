//! Multiclass Newton boosting.
//!
//! Scores start at zero for every class. Each round computes softmax
//! probabilities `p`, then for each class `k` fits a regression tree to the
//! gradient `p_k - [y = k]` and diagonal Hessian `p_k (1 - p_k)`, with leaf
//! values `-learning_rate * G / (H + l2_penalty)`.

use rayon::prelude::*;

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::learners::proba::softmax_in_place;
use crate::learners::tree::{check_xy, grow, tree_rng, GrowParams, Newton};
use crate::learners::{Classifier, LearnerConfig, LearnerKind, RegressionTree};

const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedTrees {
    n_features: usize,
    n_classes: usize,
    /// `rounds[r][k]` adds to the score of class `k`.
    rounds: Vec<Vec<RegressionTree>>,
}

impl BoostedTrees {
    pub fn from_rounds(
        rounds: Vec<Vec<RegressionTree>>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        for round in &rounds {
            if round.len() != n_classes {
                return Err(Error::InvalidData(format!(
                    "boosting round holds {} trees, expected {n_classes}",
                    round.len()
                )));
            }
            if let Some(t) = round.iter().find(|t| t.n_features() != n_features) {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: t.n_features(),
                });
            }
        }
        Ok(BoostedTrees {
            n_features,
            n_classes,
            rounds,
        })
    }

    pub fn rounds(&self) -> &[Vec<RegressionTree>] {
        &self.rounds
    }

    /// Raw additive scores before the softmax.
    pub fn scores(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for round in &self.rounds {
            for (s, tree) in out.iter_mut().zip(round) {
                *s += *tree.leaf(row);
            }
        }
    }
}

impl Classifier for BoostedTrees {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        self.scores(row, out);
        softmax_in_place(out);
    }
}

pub fn fit_boosted_trees(x: &FeatureMatrix, y: &LabelVector, cfg: &LearnerConfig) -> Result<BoostedTrees> {
    cfg.expect_kind(LearnerKind::BoostedTrees)?;
    check_xy(x, y)?;
    let n = x.n_rows();
    let k = y.n_classes();
    let params = GrowParams::from_config(cfg, x.n_cols(), false);
    let mut scores = vec![0.0; n * k];
    let mut probs = vec![0.0; n * k];
    let mut rounds = Vec::with_capacity(cfg.n_rounds);

    for round in 0..cfg.n_rounds {
        probs.copy_from_slice(&scores);
        probs.chunks_exact_mut(k).for_each(softmax_in_place);

        let trees: Vec<RegressionTree> = (0..k)
            .into_par_iter()
            .map(|class| {
                let mut grad = Vec::with_capacity(n);
                let mut hess = Vec::with_capacity(n);
                for (i, &label) in y.labels().iter().enumerate() {
                    let p = probs[i * k + class];
                    grad.push(p - f64::from(u8::from(label == class)));
                    hess.push((p * (1.0 - p)).max(MIN_HESSIAN));
                }
                let newton = Newton {
                    grad: &grad,
                    hess: &hess,
                    l2_penalty: cfg.l2_penalty,
                    learning_rate: cfg.learning_rate,
                };
                let mut rng = tree_rng(cfg.seed, round * k + class);
                grow(x, &newton, (0..n).collect(), params, &mut rng)
            })
            .collect();

        for (i, row) in x.rows().enumerate() {
            for (class, tree) in trees.iter().enumerate() {
                scores[i * k + class] += *tree.leaf(row);
            }
        }
        rounds.push(trees);
    }
    BoostedTrees::from_rounds(rounds, x.n_cols(), k)
}
