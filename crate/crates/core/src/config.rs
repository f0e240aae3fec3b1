//! Flat `key = value` configuration.
//!
//! Cascade-level keys are bare (`k_folds`, `max_layers`, `patience`,
//! `improvement_epsilon`, `seed`, `test_fraction`); learner keys carry the
//! learner prefix (`random_forest.`, `extra_trees.`, `boosted.`,
//! `logistic.`), e.g. `boosted.learning_rate = 0.1`. Blank lines and lines
//! starting with `#` are ignored.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::cascade::CascadeConfig;
use crate::dataset::SplitSpec;
use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, LearnerKind};

/// Everything a run needs: the cascade config plus the hold-out fraction.
/// The cascade seed also seeds the train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub cascade: CascadeConfig,
    pub test_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            cascade: CascadeConfig::default(),
            test_fraction: 0.1,
        }
    }
}

fn prefix(kind: LearnerKind) -> &'static str {
    match kind {
        LearnerKind::RandomForest => "random_forest",
        LearnerKind::ExtraTrees => "extra_trees",
        LearnerKind::BoostedTrees => "boosted",
        LearnerKind::Logistic => "logistic",
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{value}`")))
}

fn apply_learner(cfg: &mut LearnerConfig, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "n_trees" => cfg.n_trees = parse(key, value)?,
        "max_depth" => {
            cfg.max_depth = match value {
                "none" | "unlimited" => None,
                v => Some(parse(key, v)?),
            }
        }
        "min_samples_leaf" => cfg.min_samples_leaf = parse(key, value)?,
        "max_features" => cfg.max_features = value.parse()?,
        "bootstrap" => cfg.bootstrap = parse(key, value)?,
        "learning_rate" => cfg.learning_rate = parse(key, value)?,
        "n_rounds" => cfg.n_rounds = parse(key, value)?,
        "l2_penalty" => cfg.l2_penalty = parse(key, value)?,
        "max_iterations" => cfg.max_iterations = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
    }
    Ok(())
}

impl Settings {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            seed: self.cascade.seed,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let c = &mut self.cascade;
        match key {
            "k_folds" => c.k_folds = parse(key, value)?,
            "max_layers" => c.max_layers = parse(key, value)?,
            "patience" => c.patience = parse(key, value)?,
            "improvement_epsilon" => c.improvement_epsilon = parse(key, value)?,
            "seed" => c.seed = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            _ => {
                let (scope, field) = key
                    .split_once('.')
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown key `{key}`")))?;
                let slot = LearnerKind::LAYER_ORDER
                    .iter()
                    .position(|&k| prefix(k) == scope || k.as_str() == scope)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown learner prefix in `{key}`")))?;
                apply_learner(&mut c.learners[slot], field, key, value)?;
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.cascade.validate()?;
        self.split_spec().validate()
    }

    /// The effective configuration under the same key names the parser
    /// accepts.
    pub fn to_flat(&self) -> BTreeMap<String, String> {
        let c = &self.cascade;
        let mut out = BTreeMap::new();
        out.insert("k_folds".into(), c.k_folds.to_string());
        out.insert("max_layers".into(), c.max_layers.to_string());
        out.insert("patience".into(), c.patience.to_string());
        out.insert("improvement_epsilon".into(), c.improvement_epsilon.to_string());
        out.insert("seed".into(), c.seed.to_string());
        out.insert("test_fraction".into(), self.test_fraction.to_string());
        for l in &c.learners {
            let p = prefix(l.kind);
            let mut put = |field: &str, v: String| {
                out.insert(format!("{p}.{field}"), v);
            };
            match l.kind {
                LearnerKind::RandomForest | LearnerKind::ExtraTrees => {
                    put("n_trees", l.n_trees.to_string());
                    put("max_features", l.max_features.to_string());
                    if l.kind == LearnerKind::RandomForest {
                        put("bootstrap", l.bootstrap.to_string());
                    }
                }
                LearnerKind::BoostedTrees => {
                    put("n_rounds", l.n_rounds.to_string());
                    put("learning_rate", l.learning_rate.to_string());
                    put("l2_penalty", l.l2_penalty.to_string());
                    put("max_features", l.max_features.to_string());
                }
                LearnerKind::Logistic => {
                    put("l2_penalty", l.l2_penalty.to_string());
                    put("max_iterations", l.max_iterations.to_string());
                }
            }
            if l.kind != LearnerKind::Logistic {
                put(
                    "max_depth",
                    l.max_depth.map_or_else(|| "none".to_string(), |d| d.to_string()),
                );
                put("min_samples_leaf", l.min_samples_leaf.to_string());
            }
            put("seed", l.seed.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scoped_keys() {
        let mut s = Settings::default();
        s.apply_text(
            "# cascade\nk_folds = 3\nboosted.learning_rate=0.2\nrandom_forest.max_depth = 8\n\nextra_trees.max_features = all\nlogistic.l2_penalty = 0.5\ntest_fraction = 0.25\n",
        )
        .unwrap();
        assert_eq!(s.cascade.k_folds, 3);
        assert_eq!(s.cascade.learners[2].learning_rate, 0.2);
        assert_eq!(s.cascade.learners[0].max_depth, Some(8));
        assert_eq!(
            s.cascade.learners[1].max_features,
            crate::learners::MaxFeatures::All
        );
        assert_eq!(s.cascade.learners[3].l2_penalty, 0.5);
        assert_eq!(s.test_fraction, 0.25);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut s = Settings::default();
        assert!(s.apply_text("nonsense = 1").is_err());
        assert!(s.apply_text("boosted.colour = red").is_err());
        assert!(s.apply_text("k_folds = many").is_err());
        let err = s.apply_text("seed = 1\njust words").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn flat_echo_round_trips() {
        let mut s = Settings::default();
        s.set("boosted.n_rounds", "7").unwrap();
        s.set("random_forest.max_depth", "none").unwrap();
        let flat = s.to_flat();
        assert_eq!(flat["boosted.n_rounds"], "7");
        assert_eq!(flat["test_fraction"], "0.1");
        let mut again = Settings::default();
        for (k, v) in &flat {
            again.set(k, v).unwrap();
        }
        assert_eq!(again, s);
    }
}
