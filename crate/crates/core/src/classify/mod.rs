//! Crop classification: feature assembly from cleaned profiles, leakage-free
//! plot-grouped splitting, the Random Forest, and Table-style evaluation.

pub mod forest;
pub mod metrics;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Band, CropLabel};
use crate::preprocess::CleanProfile;

pub use forest::{train_forest, Forest, ForestConfig};
pub use metrics::{evaluate, EvalLevel, EvalReport};

/// One pixel's classifier input: the five band profiles plus the NDVI
/// profile concatenated (6 · n_steps features) and its training label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub pixel_id: String,
    pub plot_id: String,
    pub features: Vec<f64>,
    pub label: CropLabel,
}

/// Assemble a feature row from a cleaned profile and its plot's label.
pub fn feature_row(profile: &CleanProfile, label: &CropLabel) -> FeatureRow {
    let n = profile.ndvi.len();
    let mut features = Vec::with_capacity(6 * n);
    for band in Band::ALL {
        features.extend_from_slice(&profile.bands[band]);
    }
    features.extend_from_slice(&profile.ndvi);
    FeatureRow {
        pixel_id: profile.pixel_id.clone(),
        plot_id: profile.plot_id.clone(),
        features,
        label: label.clone(),
    }
}

/// Plot-level split: returns (train plot ids, test plot ids), stratified
/// by crop within ±1 plot of the target fraction, deterministic per seed.
pub fn split_plots_stratified(
    plot_labels: &BTreeMap<String, CropLabel>,
    test_fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    let mut by_crop: BTreeMap<&CropLabel, Vec<&String>> = BTreeMap::new();
    for (plot_id, label) in plot_labels {
        by_crop.entry(label).or_default().push(plot_id);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();
    for (label, mut plots) in by_crop {
        if plots.len() < 2 {
            return Err(Error::Invalid(format!(
                "crop {label} has {} plot(s); need at least 2 to stratify",
                plots.len()
            )));
        }
        plots.sort(); // stable base order before the seeded shuffle
        plots.shuffle(&mut rng);
        let n_test =
            ((plots.len() as f64 * test_fraction).round() as usize).clamp(1, plots.len() - 1);
        for (i, plot_id) in plots.into_iter().enumerate() {
            if i < n_test {
                test.insert(plot_id.clone());
            } else {
                train.insert(plot_id.clone());
            }
        }
    }
    Ok((train, test))
}

/// Row-level wrapper: whole plots land on exactly one side.
pub fn split_by_plot(
    rows: &[FeatureRow],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>)> {
    let mut plot_labels: BTreeMap<String, CropLabel> = BTreeMap::new();
    for row in rows {
        plot_labels.entry(row.plot_id.clone()).or_insert_with(|| row.label.clone());
    }
    let (train_plots, test_plots) = split_plots_stratified(&plot_labels, test_fraction, seed)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for row in rows {
        if train_plots.contains(&row.plot_id) {
            train.push(row.clone());
        } else if test_plots.contains(&row.plot_id) {
            test.push(row.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot_labels(per_crop: usize) -> BTreeMap<String, CropLabel> {
        let mut map = BTreeMap::new();
        for (c, crop) in ["mustard", "paddy", "wheat"].iter().enumerate() {
            for i in 0..per_crop {
                map.insert(format!("p{c}_{i:02}"), CropLabel::Crop(crop.to_string()));
            }
        }
        map
    }

    #[test]
    fn stratified_counts_match_fraction() {
        let labels = plot_labels(10);
        let (train, test) = split_plots_stratified(&labels, 0.3, 7).unwrap();
        assert_eq!(train.len(), 21);
        assert_eq!(test.len(), 9);
        for c in 0..3 {
            let in_test = test.iter().filter(|p| p.starts_with(&format!("p{c}_"))).count();
            assert_eq!(in_test, 3);
        }
    }

    #[test]
    fn split_is_a_partition() {
        let labels = plot_labels(7);
        let (train, test) = split_plots_stratified(&labels, 0.4, 11).unwrap();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), labels.len());
    }

    #[test]
    fn split_deterministic_per_seed() {
        let labels = plot_labels(9);
        let a = split_plots_stratified(&labels, 0.3, 5).unwrap();
        let b = split_plots_stratified(&labels, 0.3, 5).unwrap();
        assert_eq!(a, b);
        let c = split_plots_stratified(&labels, 0.3, 6).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
    }

    #[test]
    fn crop_with_one_plot_cannot_stratify() {
        let mut labels = plot_labels(3);
        labels.insert("lonely".into(), CropLabel::Crop("gram".into()));
        assert!(split_plots_stratified(&labels, 0.3, 1).is_err());
    }

    #[test]
    fn rows_never_straddle_the_split() {
        let mut rows = Vec::new();
        for (c, crop) in ["mustard", "wheat"].iter().enumerate() {
            for p in 0..4 {
                for px in 0..3 {
                    rows.push(FeatureRow {
                        pixel_id: format!("x{c}_{p}_{px}"),
                        plot_id: format!("p{c}_{p}"),
                        features: vec![c as f64, p as f64],
                        label: CropLabel::Crop(crop.to_string()),
                    });
                }
            }
        }
        let (train, test) = split_by_plot(&rows, 0.25, 3).unwrap();
        assert_eq!(train.len() + test.len(), rows.len());
        let train_plots: BTreeSet<&str> = train.iter().map(|r| r.plot_id.as_str()).collect();
        let test_plots: BTreeSet<&str> = test.iter().map(|r| r.plot_id.as_str()).collect();
        assert!(train_plots.is_disjoint(&test_plots));
    }
}
