//! Multinomial softmax regression fitted by full-batch gradient descent with
//! Armijo backtracking.
//!
//! Features are standardized with the training mean and standard deviation;
//! constant features map to zero. The objective is mean cross-entropy plus
//! `l2_penalty / 2 * ||W||^2` over the non-bias weights.

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::learners::proba::softmax_in_place;
use crate::learners::tree::check_xy;
use crate::learners::{Classifier, LearnerConfig, LearnerKind};

const GRADIENT_TOLERANCE: f64 = 1e-7;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    n_classes: usize,
    means: Vec<f64>,
    /// Reciprocal standard deviation, 0 for constant features.
    scales: Vec<f64>,
    /// Row-major `n_classes x (n_features + 1)`, bias last.
    weights: Vec<f64>,
}

impl LogisticModel {
    pub fn from_parts(
        n_classes: usize,
        means: Vec<f64>,
        scales: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let d = means.len();
        if scales.len() != d || weights.len() != n_classes * (d + 1) {
            return Err(Error::InvalidData(format!(
                "logistic parameters inconsistent with {n_classes} classes and {d} features"
            )));
        }
        Ok(LogisticModel {
            n_classes,
            means,
            scales,
            weights,
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn standardize(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(self.means.iter().zip(&self.scales))
                .map(|(v, (m, s))| (v - m) * s),
        );
    }
}

impl Classifier for LogisticModel {
    fn n_features(&self) -> usize {
        self.means.len()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        let mut z = Vec::with_capacity(row.len());
        self.standardize(row, &mut z);
        scores_into(&self.weights, &z, out);
        softmax_in_place(out);
    }
}

fn scores_into(weights: &[f64], z: &[f64], out: &mut [f64]) {
    let stride = z.len() + 1;
    for (s, w) in out.iter_mut().zip(weights.chunks_exact(stride)) {
        *s = w[z.len()] + w[..z.len()].iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Objective value at `weights` for features `x` (used as given, no
/// standardization).
pub fn softmax_loss(weights: &[f64], x: &FeatureMatrix, y: &LabelVector, l2_penalty: f64) -> f64 {
    objective(weights, x, y, l2_penalty, None)
}

/// Objective value and its analytic gradient.
pub fn softmax_loss_and_gradient(
    weights: &[f64],
    x: &FeatureMatrix,
    y: &LabelVector,
    l2_penalty: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; weights.len()];
    let loss = objective(weights, x, y, l2_penalty, Some(&mut grad));
    (loss, grad)
}

fn objective(
    weights: &[f64],
    x: &FeatureMatrix,
    y: &LabelVector,
    l2_penalty: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let d = x.n_cols();
    let k = y.n_classes();
    let stride = d + 1;
    debug_assert_eq!(weights.len(), k * stride);
    let inv_n = 1.0 / x.n_rows() as f64;
    let mut scores = vec![0.0; k];
    let mut loss = 0.0;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    for (row, &label) in x.rows().zip(y.labels()) {
        scores_into(weights, row, &mut scores);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        loss += log_norm - scores[label];
        if let Some(g) = grad.as_deref_mut() {
            for (class, s) in scores.iter().enumerate() {
                let residual = ((s - log_norm).exp() - f64::from(u8::from(class == label))) * inv_n;
                let gk = &mut g[class * stride..(class + 1) * stride];
                for (gj, xj) in gk[..d].iter_mut().zip(row) {
                    *gj += residual * xj;
                }
                gk[d] += residual;
            }
        }
    }
    loss *= inv_n;
    let mut penalty = 0.0;
    for class in 0..k {
        let w = &weights[class * stride..class * stride + d];
        penalty += w.iter().map(|v| v * v).sum::<f64>();
        if let Some(g) = grad.as_deref_mut() {
            for (gj, wj) in g[class * stride..class * stride + d].iter_mut().zip(w) {
                *gj += l2_penalty * wj;
            }
        }
    }
    loss + 0.5 * l2_penalty * penalty
}

pub fn fit_logistic(x: &FeatureMatrix, y: &LabelVector, cfg: &LearnerConfig) -> Result<LogisticModel> {
    cfg.expect_kind(LearnerKind::Logistic)?;
    check_xy(x, y)?;
    let n = x.n_rows() as f64;
    let d = x.n_cols();
    let k = y.n_classes();

    let mut means = vec![0.0; d];
    for row in x.rows() {
        means.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; d];
    for row in x.rows() {
        for ((var, v), m) in vars.iter_mut().zip(row).zip(&means) {
            *var += (v - m) * (v - m);
        }
    }
    let scales: Vec<f64> = vars
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();

    let mut standardized = Vec::with_capacity(x.values().len());
    for row in x.rows() {
        standardized.extend(
            row.iter()
                .zip(means.iter().zip(&scales))
                .map(|(v, (m, s))| (v - m) * s),
        );
    }
    let z = FeatureMatrix::new(x.n_rows(), d, standardized)?;

    let mut weights = vec![0.0; k * (d + 1)];
    let (mut loss, mut grad) = softmax_loss_and_gradient(&weights, &z, y, cfg.l2_penalty);
    let mut step = 1.0;
    let mut trial = vec![0.0; weights.len()];
    for _ in 0..cfg.max_iterations {
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad.iter().all(|g| g.abs() < GRADIENT_TOLERANCE) {
            break;
        }
        step *= 2.0;
        let accepted = loop {
            for ((t, w), g) in trial.iter_mut().zip(&weights).zip(&grad) {
                *t = w - step * g;
            }
            let trial_loss = softmax_loss(&trial, &z, y, cfg.l2_penalty);
            if trial_loss <= loss - ARMIJO * step * grad_sq {
                break true;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break false;
            }
        };
        if !accepted {
            break;
        }
        std::mem::swap(&mut weights, &mut trial);
        (loss, grad) = softmax_loss_and_gradient(&weights, &z, y, cfg.l2_penalty);
    }
    LogisticModel::from_parts(k, means, scales, weights)
}
