//! Levels 1–3 of the elimination framework: geometric/mask filters, the
//! NDVI-maximum threshold, and K-means cluster pruning, each emitting one
//! audit record per eliminated subject.

pub mod kmeans;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::overlap_fraction;
use crate::ingest::Dataset;
use crate::model::{EliminationRecord, Level, MaskLayer, PlotRecord, Reason};
use crate::preprocess::CleanProfile;

pub use kmeans::{kmeans, KmeansFit};

/// Level-1 thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Config {
    /// Max tolerated fraction of a plot covered by any single mask polygon.
    pub mask_overlap_max: f64,
    /// Max tolerated pairwise plot overlap before both plots are dropped.
    pub plot_overlap_max: f64,
    /// Sampling resolution for overlap estimation.
    pub grid_resolution: u32,
}

impl Default for L1Config {
    fn default() -> Self {
        L1Config { mask_overlap_max: 0.05, plot_overlap_max: 0.25, grid_resolution: 256 }
    }
}

/// Verdict on one K-means cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterFlag {
    Ok,
    Flat,
    Noisy,
}

/// K-means result bound to pixel ids, with per-cluster flags.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<String, usize>,
    pub inertia: f64,
    pub inertia_trace: Vec<f64>,
    pub flags: Vec<ClusterFlag>,
}

/// Result of one elimination level over a set of subjects.
#[derive(Debug, Clone, Default)]
pub struct FilterOutcome<T> {
    pub retained: Vec<T>,
    pub eliminations: Vec<EliminationRecord>,
}

/// Level 1: eliminate plots with unknown labels, excessive mask overlap,
/// or excessive pairwise overlap. All tests are evaluated on the original
/// set, so evaluation order never affects the result; when a plot trips
/// several rules, the strongest reason (unknown > mask > pair) is recorded.
pub fn l1_filter(
    plots: &BTreeMap<String, PlotRecord>,
    masks: &[MaskLayer],
    cfg: &L1Config,
) -> Result<FilterOutcome<String>> {
    let ids: Vec<&String> = plots.keys().collect();
    let mut records: BTreeMap<&str, EliminationRecord> = BTreeMap::new();

    // Pair overlap first so weaker reasons can be overwritten by priority.
    for (i, a_id) in ids.iter().enumerate() {
        let a = &plots[*a_id];
        for b_id in ids.iter().skip(i + 1) {
            let b = &plots[*b_id];
            let ab = overlap_fraction(&a.polygon, &b.polygon, cfg.grid_resolution)?;
            let ba = if ab > cfg.plot_overlap_max {
                ab // already decisive; skip the reverse ray-cast
            } else {
                overlap_fraction(&b.polygon, &a.polygon, cfg.grid_resolution)?
            };
            if ab > cfg.plot_overlap_max || ba > cfg.plot_overlap_max {
                for (id, other, frac) in [(*a_id, *b_id, ab), (*b_id, *a_id, ba)] {
                    records.entry(id).or_insert_with(|| {
                        EliminationRecord::plot(
                            id,
                            Level::L1,
                            Reason::PlotOverlap,
                            format!("overlap with plot {other}: {frac:.3}"),
                        )
                    });
                }
            }
        }
    }

    for id in &ids {
        let plot = &plots[*id];
        for layer in masks {
            let mut tripped = None;
            for ring in &layer.polygons {
                let f = overlap_fraction(&plot.polygon, ring, cfg.grid_resolution)?;
                if f > cfg.mask_overlap_max {
                    tripped = Some(f);
                    break;
                }
            }
            if let Some(f) = tripped {
                records.insert(
                    id,
                    EliminationRecord::plot(
                        id,
                        Level::L1,
                        Reason::MaskOverlap,
                        format!("{} mask covers {f:.3} of plot", layer.kind.name()),
                    ),
                );
                break;
            }
        }
    }

    for id in &ids {
        if !plots[*id].claimed_label.is_crop() {
            records.insert(
                id,
                EliminationRecord::plot(
                    id,
                    Level::L1,
                    Reason::UnknownLabel,
                    format!("claimed label {}", plots[*id].claimed_label),
                ),
            );
        }
    }

    let retained =
        ids.iter().filter(|id| !records.contains_key(id.as_str())).map(|id| (*id).clone()).collect();
    Ok(FilterOutcome { retained, eliminations: records.into_values().collect() })
}

/// Plot-decimation sweep shared by L2 and L3: plots whose retained-pixel
/// fraction falls below `plot_survival_min` are eliminated whole, and their
/// surviving pixels are cascaded out with `PlotEliminated` records.
fn decimate_plots(
    retained: Vec<CleanProfile>,
    entered: &BTreeMap<String, usize>,
    level: Level,
    plot_reason: Reason,
    plot_survival_min: f64,
    eliminations: &mut Vec<EliminationRecord>,
) -> Vec<CleanProfile> {
    let mut survivors: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &retained {
        *survivors.entry(p.plot_id.as_str()).or_default() += 1;
    }
    let mut dead_plots: BTreeSet<String> = BTreeSet::new();
    for (plot_id, &n_in) in entered {
        let n_kept = survivors.get(plot_id.as_str()).copied().unwrap_or(0);
        let fraction = n_kept as f64 / n_in as f64;
        if n_kept == 0 || fraction < plot_survival_min {
            dead_plots.insert(plot_id.clone());
            eliminations.push(EliminationRecord::plot(
                plot_id,
                level,
                plot_reason,
                format!("{n_kept} of {n_in} pixels survived ({fraction:.2})"),
            ));
        }
    }
    let (kept, cascaded): (Vec<_>, Vec<_>) =
        retained.into_iter().partition(|p| !dead_plots.contains(&p.plot_id));
    for p in cascaded {
        eliminations.push(EliminationRecord::pixel(
            &p.pixel_id,
            level,
            Reason::PlotEliminated,
            format!("plot {} decimated at {}", p.plot_id, level.name()),
        ));
    }
    kept
}

/// Level 2: a profile survives iff its NDVI maximum reaches the vegetation
/// floor; plots keeping too small a fraction of their pixels are dropped.
pub fn l2_filter(
    profiles: Vec<CleanProfile>,
    ndvi_max_min: f64,
    plot_survival_min: f64,
) -> FilterOutcome<CleanProfile> {
    let mut entered: BTreeMap<String, usize> = BTreeMap::new();
    for p in &profiles {
        *entered.entry(p.plot_id.clone()).or_default() += 1;
    }

    let mut eliminations = Vec::new();
    let mut retained = Vec::new();
    for profile in profiles {
        let max_ndvi = profile.ndvi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_ndvi >= ndvi_max_min {
            retained.push(profile);
        } else {
            eliminations.push(EliminationRecord::pixel(
                &profile.pixel_id,
                Level::L2,
                Reason::L2LowNdvi,
                format!("max NDVI {max_ndvi:.3} < {ndvi_max_min}"),
            ));
        }
    }

    let retained = decimate_plots(
        retained,
        &entered,
        Level::L2,
        Reason::L2PlotDecimated,
        plot_survival_min,
        &mut eliminations,
    );
    FilterOutcome { retained, eliminations }
}

/// Population variance over time of one series.
fn temporal_variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Mean squared second difference over the interior of one series; 0 when
/// the series is too short to have an interior.
fn temporal_roughness(series: &[f64]) -> f64 {
    if series.len() < 3 {
        return 0.0;
    }
    let terms = series.len() - 2;
    let sum: f64 = (1..series.len() - 1)
        .map(|t| {
            let d2 = series[t + 1] - 2.0 * series[t] + series[t - 1];
            d2 * d2
        })
        .sum();
    sum / terms as f64
}

/// Flag each cluster FLAT (mean member variance below `flat_var_max`) or
/// NOISY (mean member roughness above `rough_min`); FLAT wins when both
/// fire, since persistent vegetation is the stronger elimination rationale.
pub fn flag_clusters(
    fit: &KmeansFit,
    profiles: &[CleanProfile],
    flat_var_max: f64,
    rough_min: f64,
) -> Vec<ClusterFlag> {
    let mut var_sum = vec![0.0; fit.k];
    let mut rough_sum = vec![0.0; fit.k];
    let mut count = vec![0usize; fit.k];
    for (profile, &cluster) in profiles.iter().zip(fit.assignment.iter()) {
        var_sum[cluster] += temporal_variance(&profile.ndvi);
        rough_sum[cluster] += temporal_roughness(&profile.ndvi);
        count[cluster] += 1;
    }
    (0..fit.k)
        .map(|j| {
            if count[j] == 0 {
                return ClusterFlag::Ok;
            }
            let mean_var = var_sum[j] / count[j] as f64;
            let mean_rough = rough_sum[j] / count[j] as f64;
            if mean_var < flat_var_max {
                ClusterFlag::Flat
            } else if mean_rough > rough_min {
                ClusterFlag::Noisy
            } else {
                ClusterFlag::Ok
            }
        })
        .collect()
}

/// Fit K-means on the profiles' NDVI vectors and assemble the id-bound
/// cluster model (flags all OK until [`flag_clusters`] runs).
pub fn cluster_profiles(
    profiles: &[CleanProfile],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(ClusterModel, KmeansFit)> {
    let points: Vec<Vec<f64>> = profiles.iter().map(|p| p.ndvi.clone()).collect();
    let fit = kmeans(&points, k, seed, max_iter)?;
    let assignment = profiles
        .iter()
        .zip(fit.assignment.iter())
        .map(|(p, &c)| (p.pixel_id.clone(), c))
        .collect();
    let model = ClusterModel {
        k: fit.k,
        centroids: fit.centroids.clone(),
        assignment,
        inertia: fit.inertia,
        inertia_trace: fit.inertia_trace.clone(),
        flags: vec![ClusterFlag::Ok; fit.k],
    };
    Ok((model, fit))
}

/// Level 3: drop pixels sitting in FLAT or NOISY clusters, then apply the
/// same plot-decimation rule as L2.
pub fn l3_filter(
    profiles: Vec<CleanProfile>,
    model: &ClusterModel,
    plot_survival_min: f64,
) -> FilterOutcome<CleanProfile> {
    let mut entered: BTreeMap<String, usize> = BTreeMap::new();
    for p in &profiles {
        *entered.entry(p.plot_id.clone()).or_default() += 1;
    }

    let mut eliminations = Vec::new();
    let mut retained = Vec::new();
    for profile in profiles {
        let cluster = model.assignment.get(&profile.pixel_id).copied();
        let flag = cluster.map(|c| model.flags[c]).unwrap_or(ClusterFlag::Ok);
        match flag {
            ClusterFlag::Ok => retained.push(profile),
            ClusterFlag::Flat => eliminations.push(EliminationRecord::pixel(
                &profile.pixel_id,
                Level::L3,
                Reason::L3Flat,
                format!("cluster {} flagged FLAT", cluster.unwrap()),
            )),
            ClusterFlag::Noisy => eliminations.push(EliminationRecord::pixel(
                &profile.pixel_id,
                Level::L3,
                Reason::L3Noisy,
                format!("cluster {} flagged NOISY", cluster.unwrap()),
            )),
        }
    }

    let retained = decimate_plots(
        retained,
        &entered,
        Level::L3,
        Reason::L3PlotDecimated,
        plot_survival_min,
        &mut eliminations,
    );
    FilterOutcome { retained, eliminations }
}

/// Convenience for L1 call sites that hold a full dataset.
pub fn l1_filter_dataset(dataset: &Dataset, cfg: &L1Config) -> Result<FilterOutcome<String>> {
    l1_filter(&dataset.plots, &dataset.masks, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BandGrid, CropLabel, MaskKind};

    fn square(x: f64, y: f64, side: f64) -> Vec<(f64, f64)> {
        vec![(x, y), (x + side, y), (x + side, y + side), (x, y + side)]
    }

    fn plot(id: &str, ring: Vec<(f64, f64)>, label: CropLabel) -> (String, PlotRecord) {
        (
            id.to_string(),
            PlotRecord {
                plot_id: id.to_string(),
                polygon: ring,
                claimed_label: label,
                district: "D1".into(),
                season_year: 2024,
                pixel_ids: vec![format!("{id}_px")],
            },
        )
    }

    fn crop(name: &str) -> CropLabel {
        CropLabel::Crop(name.into())
    }

    #[test]
    fn l1_eliminates_mask_covered_plot() {
        let plots: BTreeMap<_, _> =
            [plot("p1", square(0.0, 0.0, 1.0), crop("wheat"))].into_iter().collect();
        // Road mask covering ~60% of the plot.
        let masks = vec![MaskLayer { kind: MaskKind::Road, polygons: vec![square(0.0, 0.0, 0.6)] }];
        let out = l1_filter(&plots, &masks, &L1Config::default()).unwrap();
        assert!(out.retained.is_empty());
        assert_eq!(out.eliminations[0].reason, Reason::MaskOverlap);
        assert!(out.eliminations[0].detail.contains("ROAD"));
    }

    #[test]
    fn l1_eliminates_both_plots_of_coincident_pair() {
        let plots: BTreeMap<_, _> = [
            plot("p1", square(0.0, 0.0, 1.0), crop("wheat")),
            plot("p2", square(0.0, 0.0, 1.0), crop("paddy")),
        ]
        .into_iter()
        .collect();
        let out = l1_filter(&plots, &[], &L1Config::default()).unwrap();
        assert!(out.retained.is_empty());
        assert_eq!(out.eliminations.len(), 2);
        assert!(out.eliminations.iter().all(|r| r.reason == Reason::PlotOverlap));
    }

    #[test]
    fn l1_retains_isolated_plot() {
        let plots: BTreeMap<_, _> = [
            plot("p1", square(0.0, 0.0, 1.0), crop("wheat")),
            plot("p2", square(10.0, 10.0, 1.0), crop("paddy")),
        ]
        .into_iter()
        .collect();
        let out = l1_filter(&plots, &[], &L1Config::default()).unwrap();
        assert_eq!(out.retained, vec!["p1".to_string(), "p2".to_string()]);
    }

    #[test]
    fn l1_eliminates_unknown_label_with_priority() {
        // Unknown label wins over the pair-overlap reason.
        let plots: BTreeMap<_, _> = [
            plot("p1", square(0.0, 0.0, 1.0), CropLabel::Unknown),
            plot("p2", square(0.0, 0.0, 1.0), crop("paddy")),
        ]
        .into_iter()
        .collect();
        let out = l1_filter(&plots, &[], &L1Config::default()).unwrap();
        let p1 = out.eliminations.iter().find(|r| r.subject_id == "p1").unwrap();
        assert_eq!(p1.reason, Reason::UnknownLabel);
        let p2 = out.eliminations.iter().find(|r| r.subject_id == "p2").unwrap();
        assert_eq!(p2.reason, Reason::PlotOverlap);
    }

    fn clean(pixel: &str, plot: &str, ndvi: Vec<f64>) -> CleanProfile {
        let n = ndvi.len();
        CleanProfile {
            pixel_id: pixel.into(),
            plot_id: plot.into(),
            bands: BandGrid(std::array::from_fn(|_| vec![0.2; n])),
            ndvi,
            spatial: None,
        }
    }

    #[test]
    fn l2_threshold_boundary() {
        let profiles = vec![
            clean("a", "p1", vec![0.1, 0.35, 0.2]),
            clean("b", "p1", vec![0.1, 0.80, 0.2]),
            clean("c", "p1", vec![0.1, 0.40, 0.2]),
        ];
        let out = l2_filter(profiles, 0.40, 0.0);
        let kept: Vec<&str> = out.retained.iter().map(|p| p.pixel_id.as_str()).collect();
        assert_eq!(kept, vec!["b", "c"]); // 0.40 meets the ≥ rule, 0.35 fails
        assert_eq!(out.eliminations.len(), 1);
        assert_eq!(out.eliminations[0].reason, Reason::L2LowNdvi);
    }

    #[test]
    fn l2_empty_input_empty_output() {
        let out = l2_filter(vec![], 0.4, 0.3);
        assert!(out.retained.is_empty());
        assert!(out.eliminations.is_empty());
    }

    #[test]
    fn l2_decimates_plot_below_survival_floor() {
        // 1 of 4 pixels survives (0.25 < 0.3): whole plot goes.
        let mut profiles = vec![clean("good", "p1", vec![0.1, 0.9, 0.1])];
        for i in 0..3 {
            profiles.push(clean(&format!("low{i}"), "p1", vec![0.1, 0.2, 0.1]));
        }
        let out = l2_filter(profiles, 0.40, 0.3);
        assert!(out.retained.is_empty());
        let plot_recs: Vec<_> =
            out.eliminations.iter().filter(|r| r.reason == Reason::L2PlotDecimated).collect();
        assert_eq!(plot_recs.len(), 1);
        let cascades: Vec<_> =
            out.eliminations.iter().filter(|r| r.reason == Reason::PlotEliminated).collect();
        assert_eq!(cascades.len(), 1);
        assert_eq!(cascades[0].subject_id, "good");
    }

    #[test]
    fn flag_constant_cluster_flat() {
        let profiles = vec![clean("a", "p1", vec![0.5; 10]), clean("b", "p1", vec![0.5; 10])];
        let fit = KmeansFit {
            k: 1,
            centroids: vec![vec![0.5; 10]],
            assignment: vec![0, 0],
            inertia: 0.0,
            inertia_trace: vec![0.0],
        };
        let flags = flag_clusters(&fit, &profiles, 0.005, 0.01);
        assert_eq!(flags, vec![ClusterFlag::Flat]);
    }

    #[test]
    fn flag_alternating_cluster_noisy() {
        // 0.2/0.8 alternation: every second difference is ±1.2, so mean
        // squared roughness is exactly 1.44.
        let ndvi: Vec<f64> = (0..10).map(|t| if t % 2 == 0 { 0.2 } else { 0.8 }).collect();
        assert!((temporal_roughness(&ndvi) - 1.44).abs() < 1e-12);
        let profiles = vec![clean("a", "p1", ndvi)];
        let fit = KmeansFit {
            k: 1,
            centroids: vec![vec![0.5; 10]],
            assignment: vec![0],
            inertia: 0.0,
            inertia_trace: vec![0.0],
        };
        let flags = flag_clusters(&fit, &profiles, 0.005, 0.01);
        assert_eq!(flags, vec![ClusterFlag::Noisy]);
    }

    #[test]
    fn flat_wins_when_both_fire() {
        // Constant profile has zero variance and zero roughness; force the
        // both-fire case with thresholds that would also trip NOISY.
        let profiles = vec![clean("a", "p1", vec![0.5; 10])];
        let fit = KmeansFit {
            k: 1,
            centroids: vec![vec![0.5; 10]],
            assignment: vec![0],
            inertia: 0.0,
            inertia_trace: vec![0.0],
        };
        let flags = flag_clusters(&fit, &profiles, 0.005, -1.0);
        assert_eq!(flags, vec![ClusterFlag::Flat]);
    }

    #[test]
    fn l3_eliminates_flagged_clusters_only() {
        let profiles: Vec<CleanProfile> = (0..6)
            .map(|i| clean(&format!("x{i}"), &format!("p{}", i % 2), vec![0.1 * i as f64; 4]))
            .collect();
        let mut assignment = BTreeMap::new();
        for (i, p) in profiles.iter().enumerate() {
            assignment.insert(p.pixel_id.clone(), i % 2);
        }
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0; 4]; 2],
            assignment,
            inertia: 0.0,
            inertia_trace: vec![0.0],
            flags: vec![ClusterFlag::Ok, ClusterFlag::Flat],
        };
        let out = l3_filter(profiles, &model, 0.0);
        assert_eq!(out.retained.len(), 3);
        assert_eq!(
            out.eliminations.iter().filter(|r| r.reason == Reason::L3Flat).count(),
            3
        );
        // One plot lost every pixel and leaves with its own record.
        assert_eq!(
            out.eliminations.iter().filter(|r| r.reason == Reason::L3PlotDecimated).count(),
            1
        );
    }

    #[test]
    fn l3_all_ok_retains_everything() {
        let profiles = vec![clean("a", "p1", vec![0.2, 0.6, 0.3])];
        let model = ClusterModel {
            k: 1,
            centroids: vec![vec![0.0; 3]],
            assignment: [("a".to_string(), 0)].into_iter().collect(),
            inertia: 0.0,
            inertia_trace: vec![0.0],
            flags: vec![ClusterFlag::Ok],
        };
        let out = l3_filter(profiles, &model, 0.3);
        assert_eq!(out.retained.len(), 1);
        assert!(out.eliminations.is_empty());
    }

    #[test]
    fn l3_decimation_by_counting() {
        // 8 of 10 pixels in a NOISY cluster → survival 0.2 < 0.3 → plot dies.
        let profiles: Vec<CleanProfile> =
            (0..10).map(|i| clean(&format!("x{i}"), "p1", vec![0.2, 0.6, 0.3])).collect();
        let mut assignment = BTreeMap::new();
        for (i, p) in profiles.iter().enumerate() {
            assignment.insert(p.pixel_id.clone(), usize::from(i >= 8));
        }
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0; 3]; 2],
            assignment,
            inertia: 0.0,
            inertia_trace: vec![0.0],
            flags: vec![ClusterFlag::Noisy, ClusterFlag::Ok],
        };
        let out = l3_filter(profiles, &model, 0.3);
        assert!(out.retained.is_empty());
        assert_eq!(
            out.eliminations.iter().filter(|r| r.reason == Reason::L3Noisy).count(),
            8
        );
        assert_eq!(
            out.eliminations.iter().filter(|r| r.reason == Reason::L3PlotDecimated).count(),
            1
        );
        assert_eq!(
            out.eliminations.iter().filter(|r| r.reason == Reason::PlotEliminated).count(),
            2
        );
    }
}
