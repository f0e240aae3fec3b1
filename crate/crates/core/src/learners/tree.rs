//! Axis-aligned binary decision trees.
//!
//! One iterative grower serves both the Gini classification trees used by
//! the forests and the second-order regression trees used by boosting; the
//! split criterion is abstracted behind [`Criterion`]. Rows go left when
//! `x[feature] <= threshold`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub enum Node<L> {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(L),
}

/// Flat node array; node 0 is the root and children always follow their
/// parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<L> {
    nodes: Vec<Node<L>>,
    n_features: usize,
}

/// Leaves hold a class distribution.
pub type ClassTree = Tree<Vec<f64>>;
/// Leaves hold an additive score.
pub type RegressionTree = Tree<f64>;

impl<L> Tree<L> {
    pub fn from_nodes(nodes: Vec<Node<L>>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidData("tree has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            {
                if feature >= n_features {
                    return Err(Error::InvalidData(format!(
                        "node {i} splits on feature {feature}, tree has {n_features}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::InvalidData(format!("node {i} has non-finite threshold")));
                }
                if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidData(format!(
                        "node {i} has invalid children {left}/{right}"
                    )));
                }
            }
        }
        Ok(Tree { nodes, n_features })
    }

    pub fn nodes(&self) -> &[Node<L>] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn root(&self) -> &Node<L> {
        &self.nodes[0]
    }

    pub fn leaf(&self, row: &[f64]) -> &L {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf(value) => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<L>(nodes: &[Node<L>], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf(_) => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Non-constant candidate features examined per node.
    pub max_features: usize,
    /// Draw one uniform threshold per candidate feature instead of scanning
    /// every midpoint.
    pub random_thresholds: bool,
}

impl GrowParams {
    pub fn from_config(cfg: &LearnerConfig, n_features: usize, random_thresholds: bool) -> Self {
        GrowParams {
            max_depth: cfg.max_depth,
            min_samples_leaf: cfg.min_samples_leaf.max(1),
            max_features: cfg.max_features.resolve(n_features),
            random_thresholds,
        }
    }
}

pub(crate) trait Criterion {
    type Stats: Clone;
    type Leaf;

    fn empty(&self) -> Self::Stats;
    fn add(&self, stats: &mut Self::Stats, row: usize);
    fn remove(&self, stats: &mut Self::Stats, row: usize);
    /// Quantity to maximize, summed over children.
    fn score(&self, stats: &Self::Stats) -> f64;
    fn is_pure(&self, stats: &Self::Stats) -> bool;
    /// Whether a split must strictly improve on the parent's score.
    fn requires_gain(&self) -> bool;
    fn leaf(&self, stats: &Self::Stats) -> Self::Leaf;
}

/// Weighted Gini. Minimizing the weighted child impurity is the same as
/// maximizing `sum_k w_k^2 / W` summed over children.
pub(crate) struct Gini<'a> {
    pub labels: &'a [usize],
    pub weights: &'a [f64],
    pub n_classes: usize,
}

#[derive(Clone)]
pub(crate) struct ClassStats {
    per_class: Vec<f64>,
    total: f64,
}

impl Criterion for Gini<'_> {
    type Stats = ClassStats;
    type Leaf = Vec<f64>;

    fn empty(&self) -> ClassStats {
        ClassStats {
            per_class: vec![0.0; self.n_classes],
            total: 0.0,
        }
    }

    fn add(&self, s: &mut ClassStats, row: usize) {
        let w = self.weights[row];
        s.per_class[self.labels[row]] += w;
        s.total += w;
    }

    fn remove(&self, s: &mut ClassStats, row: usize) {
        let w = self.weights[row];
        s.per_class[self.labels[row]] -= w;
        s.total -= w;
    }

    fn score(&self, s: &ClassStats) -> f64 {
        if s.total <= 0.0 {
            return 0.0;
        }
        s.per_class.iter().map(|w| w * w).sum::<f64>() / s.total
    }

    fn is_pure(&self, s: &ClassStats) -> bool {
        s.per_class.iter().filter(|&&w| w > 0.0).count() <= 1
    }

    fn requires_gain(&self) -> bool {
        false
    }

    fn leaf(&self, s: &ClassStats) -> Vec<f64> {
        let mut dist: Vec<f64> = s.per_class.iter().map(|w| w.max(0.0) / s.total).collect();
        let sum: f64 = dist.iter().sum();
        dist.iter_mut().for_each(|p| *p /= sum);
        dist
    }
}

/// Second-order boosting statistics: a leaf's value is
/// `-learning_rate * G / (H + l2)` and its score `G^2 / (H + l2)`.
pub(crate) struct Newton<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub l2_penalty: f64,
    pub learning_rate: f64,
}

#[derive(Clone)]
pub(crate) struct GradStats {
    grad: f64,
    hess: f64,
}

impl Criterion for Newton<'_> {
    type Stats = GradStats;
    type Leaf = f64;

    fn empty(&self) -> GradStats {
        GradStats { grad: 0.0, hess: 0.0 }
    }

    fn add(&self, s: &mut GradStats, row: usize) {
        s.grad += self.grad[row];
        s.hess += self.hess[row];
    }

    fn remove(&self, s: &mut GradStats, row: usize) {
        s.grad -= self.grad[row];
        s.hess -= self.hess[row];
    }

    fn score(&self, s: &GradStats) -> f64 {
        s.grad * s.grad / (s.hess + self.l2_penalty)
    }

    fn is_pure(&self, _: &GradStats) -> bool {
        false
    }

    fn requires_gain(&self) -> bool {
        true
    }

    fn leaf(&self, s: &GradStats) -> f64 {
        -self.learning_rate * s.grad / (s.hess + self.l2_penalty)
    }
}

fn improves(score: f64, best: f64) -> bool {
    best == f64::NEG_INFINITY || score > best + 1e-12 * best.abs().max(1.0)
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid < hi {
        mid
    } else {
        lo
    }
}

struct Candidate {
    feature: usize,
    min: f64,
    max: f64,
}

struct Grower<'a, C: Criterion> {
    x: &'a FeatureMatrix,
    criterion: &'a C,
    params: GrowParams,
    rng: &'a mut ChaCha8Rng,
    feature_order: Vec<usize>,
    sorted: Vec<(f64, usize)>,
}

impl<C: Criterion> Grower<'_, C> {
    fn candidates(&mut self, rows: &[usize]) -> Vec<Candidate> {
        let d = self.x.n_cols();
        if self.params.max_features < d {
            self.feature_order.shuffle(self.rng);
        }
        let mut chosen = Vec::with_capacity(self.params.max_features.min(d));
        for &f in &self.feature_order {
            if chosen.len() == self.params.max_features {
                break;
            }
            let (min, max) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = self.x.get(r, f);
                    (lo.min(v), hi.max(v))
                });
            if min < max {
                chosen.push(Candidate { feature: f, min, max });
            }
        }
        chosen.sort_unstable_by_key(|c| c.feature);
        chosen
    }

    /// Best `(feature, threshold)`, ties resolved to the lowest feature and
    /// then the lowest threshold.
    fn best_split(&mut self, rows: &[usize], parent: &C::Stats) -> Option<(usize, f64)> {
        let crit = self.criterion;
        let min_leaf = self.params.min_samples_leaf;
        let n = rows.len();
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = f64::NEG_INFINITY;

        for cand in self.candidates(rows) {
            let f = cand.feature;
            if self.params.random_thresholds {
                let t = self.rng.gen_range(cand.min..cand.max);
                let mut left = crit.empty();
                let mut right = crit.empty();
                let mut n_left = 0;
                for &r in rows {
                    if self.x.get(r, f) <= t {
                        crit.add(&mut left, r);
                        n_left += 1;
                    } else {
                        crit.add(&mut right, r);
                    }
                }
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let score = crit.score(&left) + crit.score(&right);
                if improves(score, best_score) {
                    best_score = score;
                    best = Some((f, t));
                }
            } else {
                self.sorted.clear();
                self.sorted.extend(rows.iter().map(|&r| (self.x.get(r, f), r)));
                self.sorted
                    .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut left = crit.empty();
                let mut right = parent.clone();
                for i in 0..n - 1 {
                    let (v, r) = self.sorted[i];
                    crit.add(&mut left, r);
                    crit.remove(&mut right, r);
                    let next = self.sorted[i + 1].0;
                    if v == next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                        continue;
                    }
                    let score = crit.score(&left) + crit.score(&right);
                    if improves(score, best_score) {
                        best_score = score;
                        best = Some((f, midpoint(v, next)));
                    }
                }
            }
        }

        if crit.requires_gain() && !improves(best_score, crit.score(parent)) {
            return None;
        }
        best
    }
}

struct Task {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

pub(crate) fn grow<C: Criterion>(
    x: &FeatureMatrix,
    criterion: &C,
    mut rows: Vec<usize>,
    params: GrowParams,
    rng: &mut ChaCha8Rng,
) -> Tree<C::Leaf> {
    let mut grower = Grower {
        x,
        criterion,
        params,
        rng,
        feature_order: (0..x.n_cols()).collect(),
        sorted: Vec::with_capacity(rows.len()),
    };
    let mut nodes: Vec<Option<Node<C::Leaf>>> = vec![None];
    let mut stack = vec![Task {
        node: 0,
        start: 0,
        end: rows.len(),
        depth: 0,
    }];

    while let Some(task) = stack.pop() {
        let slice = &mut rows[task.start..task.end];
        let mut stats = criterion.empty();
        for &r in slice.iter() {
            criterion.add(&mut stats, r);
        }
        let at_limit = params.max_depth.is_some_and(|m| task.depth >= m);
        let split = if at_limit || slice.len() < 2 * params.min_samples_leaf || criterion.is_pure(&stats) {
            None
        } else {
            grower.best_split(slice, &stats)
        };

        let Some((feature, threshold)) = split else {
            nodes[task.node] = Some(Node::Leaf(criterion.leaf(&stats)));
            continue;
        };

        let mut mid = 0;
        for i in 0..slice.len() {
            if x.get(slice[i], feature) <= threshold {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(None);
        nodes.push(None);
        nodes[task.node] = Some(Node::Split {
            feature,
            threshold,
            left,
            right,
        });
        stack.push(Task {
            node: right,
            start: task.start + mid,
            end: task.end,
            depth: task.depth + 1,
        });
        stack.push(Task {
            node: left,
            start: task.start,
            end: task.start + mid,
            depth: task.depth + 1,
        });
    }

    Tree {
        nodes: nodes.into_iter().map(|n| n.expect("every node grown")).collect(),
        n_features: x.n_cols(),
    }
}

/// Random stream of the `index`-th tree of an ensemble seeded with `seed`.
pub(crate) fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    rng_for(seed, &[0x7233, index as u64])
}

pub(crate) fn check_xy(x: &FeatureMatrix, y: &LabelVector) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    Ok(())
}

pub(crate) fn grow_class_tree(
    x: &FeatureMatrix,
    y: &LabelVector,
    rows: Vec<usize>,
    weights: &[f64],
    params: GrowParams,
    rng: &mut ChaCha8Rng,
) -> ClassTree {
    let gini = Gini {
        labels: y.labels(),
        weights,
        n_classes: y.n_classes(),
    };
    grow(x, &gini, rows, params, rng)
}

/// Grows one CART tree by best Gini split over midpoint thresholds.
/// Rows with zero weight are ignored.
pub fn fit_tree(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &LearnerConfig,
    row_weights: Option<&[f64]>,
) -> Result<ClassTree> {
    check_xy(x, y)?;
    let ones;
    let weights = match row_weights {
        Some(w) => {
            if w.len() != x.n_rows() {
                return Err(Error::LengthMismatch {
                    left: x.n_rows(),
                    right: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidData(
                    "row weights must be finite and non-negative".into(),
                ));
            }
            w
        }
        None => {
            ones = vec![1.0; x.n_rows()];
            &ones
        }
    };
    let rows: Vec<usize> = (0..x.n_rows()).filter(|&i| weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::InvalidData("all row weights are zero".into()));
    }
    let params = GrowParams::from_config(cfg, x.n_cols(), false);
    Ok(grow_class_tree(
        x,
        y,
        rows,
        weights,
        params,
        &mut tree_rng(cfg.seed, 0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LearnerConfig, MaxFeatures};

    fn cart(max_depth: Option<usize>) -> LearnerConfig {
        LearnerConfig {
            max_depth,
            max_features: MaxFeatures::All,
            ..LearnerConfig::random_forest()
        }
    }

    fn predict(tree: &ClassTree, x: &FeatureMatrix) -> Vec<usize> {
        x.rows().map(|r| crate::learners::argmax(tree.leaf(r))).collect()
    }

    #[test]
    fn xor_at_depth_two() {
        let x = FeatureMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let y = LabelVector::new(vec![0, 1, 1, 0], 2).unwrap();
        let tree = fit_tree(&x, &y, &cart(Some(2)), None).unwrap();
        assert_eq!(predict(&tree, &x), vec![0, 1, 1, 0]);
        assert_eq!(tree.depth(), 2);
        // zero-gain root split tie resolves to feature 0
        assert!(matches!(tree.root(), Node::Split { feature: 0, threshold, .. } if *threshold == 0.5));
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = FeatureMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let y = LabelVector::new(vec![2, 2, 2], 3).unwrap();
        let tree = fit_tree(&x, &y, &cart(None), None).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.leaf(&[0.0]), &vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn pure_split_is_chosen() {
        // feature 0 is noisy, feature 1 separates [5,5] into [5,0]/[0,5]
        let rows: Vec<[f64; 2]> = (0..10)
            .map(|i| [((i * 7) % 10) as f64, if i < 5 { 1.0 } else { 4.0 }])
            .collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let y = LabelVector::new((0..10).map(|i| usize::from(i >= 5)).collect(), 2).unwrap();
        let tree = fit_tree(&x, &y, &cart(Some(1)), None).unwrap();
        match tree.root() {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!((*feature, *threshold), (1, 2.5));
                assert!(matches!(&tree.nodes()[*left], Node::Leaf(d) if d == &vec![1.0, 0.0]));
                assert!(matches!(&tree.nodes()[*right], Node::Leaf(d) if d == &vec![0.0, 1.0]));
            }
            Node::Leaf(_) => panic!("expected a split"),
        }
    }

    #[test]
    fn weights_shape_leaf_distribution() {
        let x = FeatureMatrix::from_rows(&[[0.0], [0.0], [0.0]]).unwrap();
        let y = LabelVector::new(vec![0, 1, 1], 2).unwrap();
        let tree = fit_tree(&x, &y, &cart(None), Some(&[3.0, 1.0, 0.0])).unwrap();
        assert_eq!(tree.leaf(&[0.0]), &vec![0.75, 0.25]);
        assert!(fit_tree(&x, &y, &cart(None), Some(&[0.0; 3])).is_err());
        assert!(fit_tree(&x, &y, &cart(None), Some(&[-1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn min_samples_leaf_is_honored() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0]]).unwrap();
        let y = LabelVector::new(vec![0, 1, 1, 1, 1], 2).unwrap();
        let cfg = LearnerConfig {
            min_samples_leaf: 2,
            ..cart(None)
        };
        let tree = fit_tree(&x, &y, &cfg, None).unwrap();
        assert!(matches!(tree.root(), Node::Split { threshold, .. } if *threshold == 1.5));
    }

    #[test]
    fn from_nodes_validates() {
        let bad = vec![
            Node::Split {
                feature: 3,
                threshold: 0.0,
                left: 1,
                right: 2,
            },
            Node::Leaf(0.0),
            Node::Leaf(1.0),
        ];
        assert!(Tree::from_nodes(bad, 2).is_err());
        let cyclic = vec![
            Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 1,
            },
            Node::Leaf(0.0),
        ];
        assert!(Tree::from_nodes(cyclic, 2).is_err());
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
    }
}
