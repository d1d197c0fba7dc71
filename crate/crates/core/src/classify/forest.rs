//! Random Forest over CART trees: seeded per-tree bootstraps, majority
//! voting with a lexicographic tie rule, out-of-bag scoring, and JSON
//! persistence.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::tree::{grow, GrowParams, Node};
use crate::classify::FeatureRow;
use crate::error::{Error, Result};
use crate::model::CropLabel;
use crate::seed::derive_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features evaluated per split; defaults to floor(sqrt(d)).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub version: u32,
    /// Class names in lexicographic order; leaf counts index into this.
    pub classes: Vec<String>,
    pub n_features: usize,
    pub n_train: usize,
    pub config: ForestConfig,
    pub trees: Vec<Node>,
}

fn tree_seed(cfg_seed: u64, index: usize) -> u64 {
    derive_seed(cfg_seed, &format!("tree-{index}"))
}

/// Bootstrap row indices for one tree: n draws with replacement. Must stay
/// the rng's first consumption so out-of-bag scoring can replay it.
fn bootstrap_rows(rng: &mut ChaCha8Rng, n: usize, bootstrap: bool) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

/// Train a forest on labeled feature rows. Requires ≥ 2 classes present.
pub fn train_forest(rows: &[FeatureRow], cfg: &ForestConfig) -> Result<Forest> {
    if cfg.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    if rows.is_empty() {
        return Err(Error::Invalid("no training rows".into()));
    }
    let n_features = rows[0].features.len();
    if rows.iter().any(|r| r.features.len() != n_features) {
        return Err(Error::Invalid("training rows have mixed feature lengths".into()));
    }

    let mut classes: Vec<String> = rows.iter().map(|r| r.label.as_str().to_string()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Invalid(format!(
            "training set has {} class(es); need at least 2",
            classes.len()
        )));
    }
    let labels: Vec<usize> = rows
        .iter()
        .map(|r| classes.iter().position(|c| c == r.label.as_str()).unwrap())
        .collect();
    let features: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();

    let features_per_split = cfg
        .features_per_split
        .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
        .clamp(1, n_features);
    let params = GrowParams {
        n_classes: classes.len(),
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf.max(1),
        features_per_split,
        n_features,
    };

    // Per-tree seeds are derived from the config seed and tree index, so
    // trees are independent work items and the result is scheduling-free.
    let trees: Vec<Node> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, i));
            let rows_i = bootstrap_rows(&mut rng, rows.len(), cfg.bootstrap);
            grow(rows_i, &features, &labels, &params, 0, &mut rng)
        })
        .collect();

    Ok(Forest {
        version: MODEL_FORMAT_VERSION,
        classes,
        n_features,
        n_train: rows.len(),
        config: *cfg,
        trees,
    })
}

impl Forest {
    fn check_width(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.n_features {
            return Err(Error::Invalid(format!(
                "feature length {} does not match trained width {}",
                features.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Majority vote over trees; forest-level ties go to the
    /// lexicographically smallest class name (= lowest class index).
    pub fn predict_one(&self, features: &[f64]) -> Result<CropLabel> {
        self.check_width(features)?;
        let mut votes = vec![0usize; self.classes.len()];
        for tree in &self.trees {
            votes[tree.vote(features)] += 1;
        }
        let mut best = 0usize;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Ok(CropLabel::Crop(self.classes[best].clone()))
    }

    pub fn predict(&self, rows: &[FeatureRow]) -> Result<Vec<CropLabel>> {
        rows.iter().map(|r| self.predict_one(&r.features)).collect()
    }

    /// Out-of-bag accuracy on the exact training rows (same order). Rows
    /// never out of bag are skipped.
    pub fn oob_accuracy(&self, rows: &[FeatureRow]) -> Result<f64> {
        if rows.len() != self.n_train {
            return Err(Error::Invalid(format!(
                "out-of-bag scoring needs the {} training rows, got {}",
                self.n_train,
                rows.len()
            )));
        }
        if !self.config.bootstrap {
            return Err(Error::Invalid("out-of-bag scoring requires bootstrap".into()));
        }
        let n = rows.len();
        let mut votes = vec![vec![0usize; self.classes.len()]; n];
        for (i, tree) in self.trees.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(self.config.seed, i));
            let bag = bootstrap_rows(&mut rng, n, true);
            let mut in_bag = vec![false; n];
            for &r in &bag {
                in_bag[r] = true;
            }
            for (r, row) in rows.iter().enumerate() {
                if !in_bag[r] {
                    votes[r][tree.vote(&row.features)] += 1;
                }
            }
        }
        let mut scored = 0usize;
        let mut correct = 0usize;
        for (r, row) in rows.iter().enumerate() {
            if votes[r].iter().all(|&v| v == 0) {
                continue;
            }
            let mut best = 0usize;
            for (i, &v) in votes[r].iter().enumerate() {
                if v > votes[r][best] {
                    best = i;
                }
            }
            scored += 1;
            if self.classes[best] == row.label.as_str() {
                correct += 1;
            }
        }
        if scored == 0 {
            return Err(Error::Invalid("no rows were ever out of bag".into()));
        }
        Ok(correct as f64 / scored as f64)
    }

    /// Self-describing JSON persistence with a mandatory version field.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let forest: Forest = serde_json::from_str(text)?;
        if forest.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format version {} unsupported (expected {MODEL_FORMAT_VERSION})",
                forest.version
            )));
        }
        Ok(forest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pixel: &str, plot: &str, features: Vec<f64>, label: &str) -> FeatureRow {
        FeatureRow {
            pixel_id: pixel.into(),
            plot_id: plot.into(),
            features,
            label: CropLabel::Crop(label.into()),
        }
    }

    fn separable_rows() -> Vec<FeatureRow> {
        (0..8)
            .map(|i| {
                let class = i % 2;
                row(
                    &format!("x{i}"),
                    &format!("p{i}"),
                    vec![class as f64, (i / 2) as f64 * 0.1],
                    if class == 0 { "mustard" } else { "wheat" },
                )
            })
            .collect()
    }

    #[test]
    fn single_tree_no_bootstrap_fits_training_exactly() {
        let rows = separable_rows();
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            seed: 3,
            ..ForestConfig::default()
        };
        let forest = train_forest(&rows, &cfg).unwrap();
        let predicted = forest.predict(&rows).unwrap();
        for (p, r) in predicted.iter().zip(rows.iter()) {
            assert_eq!(p, &r.label);
        }
    }

    #[test]
    fn same_seed_same_predictions() {
        let rows = separable_rows();
        let cfg = ForestConfig { n_trees: 12, seed: 99, ..ForestConfig::default() };
        let a = train_forest(&rows, &cfg).unwrap();
        let b = train_forest(&rows, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&rows).unwrap(), b.predict(&rows).unwrap());
    }

    #[test]
    fn single_class_input_is_error() {
        let rows: Vec<FeatureRow> =
            (0..4).map(|i| row(&format!("x{i}"), "p", vec![0.1], "wheat")).collect();
        assert!(train_forest(&rows, &ForestConfig::default()).is_err());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let rows = separable_rows();
        let forest = train_forest(&rows, &ForestConfig::default()).unwrap();
        assert!(forest.predict_one(&[0.1]).is_err());
    }

    #[test]
    fn batch_predict_equals_pointwise() {
        let rows = separable_rows();
        let forest =
            train_forest(&rows, &ForestConfig { n_trees: 7, seed: 5, ..Default::default() })
                .unwrap();
        let batch = forest.predict(&rows).unwrap();
        for (r, b) in rows.iter().zip(batch.iter()) {
            assert_eq!(forest.predict_one(&r.features).unwrap(), *b);
        }
    }

    #[test]
    fn forest_tie_goes_to_lexicographically_smallest() {
        // Two stumps voting differently: "mustard" must win over "wheat".
        let forest = Forest {
            version: MODEL_FORMAT_VERSION,
            classes: vec!["mustard".into(), "wheat".into()],
            n_features: 1,
            n_train: 2,
            config: ForestConfig::default(),
            trees: vec![
                Node::Leaf { counts: vec![1, 0] },
                Node::Leaf { counts: vec![0, 1] },
            ],
        };
        assert_eq!(
            forest.predict_one(&[0.0]).unwrap(),
            CropLabel::Crop("mustard".into())
        );
    }

    #[test]
    fn prediction_invariant_under_tree_permutation() {
        let rows = separable_rows();
        let mut forest =
            train_forest(&rows, &ForestConfig { n_trees: 9, seed: 2, ..Default::default() })
                .unwrap();
        let before = forest.predict(&rows).unwrap();
        forest.trees.reverse();
        let after = forest.predict(&rows).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn json_roundtrip_and_version_gate() {
        let rows = separable_rows();
        let forest =
            train_forest(&rows, &ForestConfig { n_trees: 3, seed: 8, ..Default::default() })
                .unwrap();
        let json = forest.to_json().unwrap();
        assert!(json.contains("\"version\":1"));
        let back = Forest::from_json(&json).unwrap();
        assert_eq!(forest, back);

        let bad = json.replacen("\"version\":1", "\"version\":9", 1);
        assert!(Forest::from_json(&bad).is_err());
    }
}
