//! A single CART classification tree: Gini-impurity splits over a seeded
//! random feature subset per node, midpoint thresholds, fully specified
//! tie-breaking so training is deterministic.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        /// Class-count vector over the forest's class list.
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub n_classes: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
    pub n_features: usize,
}

fn gini(counts: &[u32], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

fn class_counts(rows: &[usize], labels: &[usize], n_classes: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n_classes];
    for &r in rows {
        counts[labels[r]] += 1;
    }
    counts
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted_impurity: f64,
    /// Row count of the left side (prefix of the sorted order).
    left_len: usize,
}

/// Evaluate all midpoint thresholds of one feature with a prefix scan over
/// the rows sorted by that feature's value. Candidates violating
/// `min_samples_leaf` on either side are skipped. Returns the best split
/// strictly better than `best_so_far`.
fn best_split_on_feature(
    feature: usize,
    rows: &[usize],
    features: &[Vec<f64>],
    labels: &[usize],
    params: &GrowParams,
    best_so_far: f64,
) -> Option<BestSplit> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| {
        features[a][feature]
            .total_cmp(&features[b][feature])
            .then_with(|| a.cmp(&b))
    });

    let n = order.len();
    let mut left_counts = vec![0u32; params.n_classes];
    let right_total = class_counts(&order, labels, params.n_classes);
    let mut right_counts = right_total;

    let mut best: Option<BestSplit> = None;
    let mut best_imp = best_so_far;
    for i in 0..n - 1 {
        let label = labels[order[i]];
        left_counts[label] += 1;
        right_counts[label] -= 1;

        let a = features[order[i]][feature];
        let b = features[order[i + 1]][feature];
        if a == b {
            continue; // not a boundary between distinct values
        }
        let left_len = i + 1;
        let right_len = n - left_len;
        if left_len < params.min_samples_leaf || right_len < params.min_samples_leaf {
            continue;
        }
        let weighted = (left_len as f64 * gini(&left_counts, left_len)
            + right_len as f64 * gini(&right_counts, right_len))
            / n as f64;
        if weighted < best_imp {
            // Midpoint between the distinct neighbors; if rounding pushes
            // it onto the right value, fall back to the left one so the
            // `value <= threshold` predicate matches this prefix exactly.
            let mid = (a + b) / 2.0;
            let threshold = if mid < b { mid } else { a };
            best_imp = weighted;
            best = Some(BestSplit { feature, threshold, weighted_impurity: weighted, left_len });
        }
    }
    best
}

/// Grow a tree over `rows` (indices into `features`/`labels`). The rng
/// drives per-node feature subsets; traversal order is deterministic, so
/// the whole tree is a pure function of its inputs and rng state.
pub fn grow(
    rows: Vec<usize>,
    features: &[Vec<f64>],
    labels: &[usize],
    params: &GrowParams,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    let counts = class_counts(&rows, labels, params.n_classes);
    let node_impurity = gini(&counts, rows.len());

    let stop = node_impurity == 0.0
        || rows.len() < 2 * params.min_samples_leaf
        || params.max_depth.is_some_and(|d| depth >= d);
    if stop {
        return Node::Leaf { counts };
    }

    // Seeded subset of candidate features; sorted so lower feature indices
    // win ties by being evaluated first.
    let mut candidates =
        rand::seq::index::sample(rng, params.n_features, params.features_per_split.min(params.n_features))
            .into_vec();
    candidates.sort_unstable();

    let mut best: Option<BestSplit> = None;
    for feature in candidates {
        let so_far = best.as_ref().map_or(node_impurity, |b| b.weighted_impurity);
        if let Some(split) = best_split_on_feature(feature, &rows, features, labels, params, so_far)
        {
            best = Some(split);
        }
    }

    let Some(split) = best else {
        return Node::Leaf { counts };
    };

    let mut left_rows = Vec::with_capacity(split.left_len);
    let mut right_rows = Vec::with_capacity(rows.len() - split.left_len);
    for r in rows {
        if features[r][split.feature] <= split.threshold {
            left_rows.push(r);
        } else {
            right_rows.push(r);
        }
    }
    debug_assert_eq!(left_rows.len(), split.left_len);

    let left = grow(left_rows, features, labels, params, depth + 1, rng);
    let right = grow(right_rows, features, labels, params, depth + 1, rng);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

impl Node {
    /// Leaf class counts for one feature vector.
    pub fn leaf_counts(&self, features: &[f64]) -> &[u32] {
        match self {
            Node::Leaf { counts } => counts,
            Node::Split { feature, threshold, left, right } => {
                if features[*feature] <= *threshold {
                    left.leaf_counts(features)
                } else {
                    right.leaf_counts(features)
                }
            }
        }
    }

    /// Per-tree vote: argmax of the leaf counts, lowest class index on ties.
    pub fn vote(&self, features: &[f64]) -> usize {
        let counts = self.leaf_counts(features);
        let mut best = 0usize;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// True if every split's weighted child impurity is ≤ its own impurity
    /// and every zero-impurity node is a leaf (checked on training data).
    #[cfg(test)]
    pub fn check_impurity_monotone(
        &self,
        rows: &[usize],
        features: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
    ) -> bool {
        let counts = class_counts(rows, labels, n_classes);
        let imp = gini(&counts, rows.len());
        match self {
            Node::Leaf { .. } => true,
            Node::Split { feature, threshold, left, right } => {
                if imp == 0.0 {
                    return false; // a pure node must be a leaf
                }
                let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| features[r][*feature] <= *threshold);
                let l_imp = gini(&class_counts(&l_rows, labels, n_classes), l_rows.len());
                let r_imp = gini(&class_counts(&r_rows, labels, n_classes), r_rows.len());
                let weighted = (l_rows.len() as f64 * l_imp + r_rows.len() as f64 * r_imp)
                    / rows.len() as f64;
                weighted <= imp + 1e-12
                    && left.check_impurity_monotone(&l_rows, features, labels, n_classes)
                    && right.check_impurity_monotone(&r_rows, features, labels, n_classes)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn grow_all(features: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Node {
        let params = GrowParams {
            n_classes,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: features[0].len(),
            n_features: features[0].len(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        grow((0..features.len()).collect(), features, labels, &params, 0, &mut rng)
    }

    #[test]
    fn separable_data_trains_pure() {
        let features = vec![vec![0.0, 5.0], vec![0.1, 4.0], vec![1.0, 5.5], vec![0.9, 4.5]];
        let labels = vec![0, 0, 1, 1];
        let tree = grow_all(&features, &labels, 2);
        for (f, &l) in features.iter().zip(labels.iter()) {
            assert_eq!(tree.vote(f), l);
        }
    }

    #[test]
    fn impurity_never_increases_down_the_tree() {
        // Noisy labels force deep splits; the chosen splits must still be
        // non-worsening at every node.
        let features: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos(), i as f64 % 5.0])
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| (i * 7 + i / 3) % 3).collect();
        let tree = grow_all(&features, &labels, 3);
        let rows: Vec<usize> = (0..40).collect();
        assert!(tree.check_impurity_monotone(&rows, &features, &labels, 3));
    }

    #[test]
    fn leaf_vote_breaks_ties_low_index() {
        let leaf = Node::Leaf { counts: vec![3, 3, 1] };
        assert_eq!(leaf.vote(&[0.0]), 0);
    }

    #[test]
    fn constant_feature_yields_leaf() {
        let features = vec![vec![0.5], vec![0.5], vec![0.5]];
        let labels = vec![0, 1, 0];
        let tree = grow_all(&features, &labels, 2);
        assert!(matches!(tree, Node::Leaf { .. }));
        assert_eq!(tree.vote(&[0.5]), 0); // majority of 2:1
    }

    #[test]
    fn min_samples_leaf_respected() {
        let features: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let params = GrowParams {
            n_classes: 2,
            max_depth: None,
            min_samples_leaf: 5,
            features_per_split: 1,
            n_features: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow((0..10).collect(), &features, &labels, &params, 0, &mut rng);
        // The only legal split is 5|5.
        match tree {
            Node::Split { ref left, ref right, .. } => {
                for child in [left, right] {
                    match child.as_ref() {
                        Node::Leaf { counts } => assert_eq!(counts.iter().sum::<u32>(), 5),
                        _ => panic!("children should be leaves"),
                    }
                }
            }
            _ => panic!("expected a split"),
        }
    }
}
