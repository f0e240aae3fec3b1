mod support;

use deepforest::dataset::{FeatureMatrix, LabelVector};
use deepforest::learners::{fit_tree, LearnerConfig, MaxFeatures, Node};
use proptest::prelude::*;
use support::gini_root_oracle;

fn stump() -> LearnerConfig {
    LearnerConfig {
        max_depth: Some(1),
        max_features: MaxFeatures::All,
        ..LearnerConfig::random_forest()
    }
}

/// Small grids of half-integers so that ties between thresholds and
/// between features show up often.
fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, usize)> {
    (2usize..=12, 1usize..=3, 2usize..=3).prop_flat_map(|(n, d, k)| {
        (
            prop::collection::vec(
                prop::collection::vec((0i32..6).prop_map(|v| f64::from(v) * 0.5), d),
                n,
            ),
            prop::collection::vec(0..k, n),
            Just(k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn root_split_matches_exhaustive_search((rows, labels, k) in dataset()) {
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let y = LabelVector::new(labels.clone(), k).unwrap();
        let tree = fit_tree(&x, &y, &stump(), None).unwrap();
        let got = match tree.root() {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf(_) => None,
        };
        prop_assert_eq!(got, gini_root_oracle(&rows, &labels, k));
    }
}
