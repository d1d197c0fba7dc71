//! Stage orchestration: preprocess → L1 → L2 → L3 → verify, then per-level
//! forest training and evaluation. Every randomized stage derives its seed
//! from the master seed, so identical inputs give byte-identical outputs.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    evaluate, feature_row, metrics::percent, split_plots_stratified, train_forest, EvalLevel,
    EvalReport, FeatureRow, Forest,
};
use crate::cleaning::{
    cluster_profiles, flag_clusters, l1_filter, l2_filter, l3_filter, ClusterModel,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{
    CropLabel, EliminationRecord, Level, PlotRecord, Reason, SubjectKind,
};
use crate::preprocess::{preprocess_pixel, CleanProfile, PreprocessOutcome, PreprocessStats};
use crate::seed::derive_seed;
use crate::synth::TrueCondition;
use crate::verify::{build_median_profiles, embed_plot, verify_plot, Decision, Verdict};

/// Per-stage funnel entry for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub level: String,
    pub plots_in: usize,
    pub plots_retained: usize,
    pub pixels_in: usize,
    pub pixels_retained: usize,
    pub eliminated_by_reason: BTreeMap<String, usize>,
}

/// Everything the cleaning chain produced.
#[derive(Debug, Clone)]
pub struct CleanOutcome {
    /// Conditioned profiles surviving preprocessing (the UNCLEAN baseline).
    pub baseline: Vec<CleanProfile>,
    pub retained_l1: Vec<CleanProfile>,
    pub retained_l2: Vec<CleanProfile>,
    pub retained_l3: Vec<CleanProfile>,
    /// L3-retained plots minus verification-flagged ones; the training set
    /// of the fully cleaned level.
    pub final_training_plots: BTreeSet<String>,
    pub eliminations: Vec<EliminationRecord>,
    pub verdicts: Vec<Verdict>,
    pub cluster: Option<ClusterModel>,
    pub kmeans_diagnostics: Vec<(usize, f64)>,
    pub preprocess_stats: PreprocessStats,
    pub levels_run: Vec<Level>,
    pub funnel: Vec<LevelCounts>,
}

impl CleanOutcome {
    /// Profiles of the deepest cleaning level that ran.
    pub fn deepest(&self) -> &[CleanProfile] {
        if self.levels_run.contains(&Level::L3) {
            &self.retained_l3
        } else if self.levels_run.contains(&Level::L2) {
            &self.retained_l2
        } else if self.levels_run.contains(&Level::L1) {
            &self.retained_l1
        } else {
            &self.baseline
        }
    }
}

fn plot_set(profiles: &[CleanProfile]) -> BTreeSet<String> {
    profiles.iter().map(|p| p.plot_id.clone()).collect()
}

fn count_reasons(records: &[EliminationRecord]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.reason.name().to_string()).or_insert(0) += 1;
    }
    out
}

/// Cascade pixel records for profiles whose plot was eliminated.
fn cascade_pixels(
    profiles: Vec<CleanProfile>,
    dead_plots: &BTreeSet<String>,
    level: Level,
) -> (Vec<CleanProfile>, Vec<EliminationRecord>) {
    let (kept, dropped): (Vec<_>, Vec<_>) =
        profiles.into_iter().partition(|p| !dead_plots.contains(&p.plot_id));
    let records = dropped
        .iter()
        .map(|p| {
            EliminationRecord::pixel(
                &p.pixel_id,
                level,
                Reason::PlotEliminated,
                format!("plot {} eliminated at {}", p.plot_id, level.name()),
            )
        })
        .collect();
    (kept, records)
}

/// Run the cleaning chain on a joined dataset. `prior_eliminations` carries
/// the ingest hygiene records so the audit trail stays complete.
pub fn run_clean(
    dataset: &Dataset,
    cfg: &RunConfig,
    seed_plots: Option<&[(String, String)]>,
    prior_eliminations: Vec<EliminationRecord>,
) -> Result<CleanOutcome> {
    let mut eliminations = prior_eliminations;
    let mut funnel: Vec<LevelCounts> = Vec::new();
    let mut levels_run: Vec<Level> = Vec::new();

    let ingest_plot_elims =
        eliminations.iter().filter(|r| r.subject == SubjectKind::Plot).count();
    funnel.push(LevelCounts {
        level: Level::Ingest.name().to_string(),
        plots_in: dataset.plots.len() + ingest_plot_elims,
        plots_retained: dataset.plots.len(),
        pixels_in: dataset.pixels.len(),
        pixels_retained: dataset.pixels.len(),
        eliminated_by_reason: count_reasons(&eliminations),
    });

    // Preprocess every pixel; embarrassingly parallel, merged in key order.
    let n_observable = dataset.observable_days();
    let pixel_list: Vec<_> = dataset.pixels.values().collect();
    let outcomes: Vec<(PreprocessOutcome, PreprocessStats)> = pixel_list
        .par_iter()
        .map(|px| preprocess_pixel(px, &dataset.grid, n_observable, &cfg.preprocess))
        .collect::<Result<_>>()?;

    let mut stats = PreprocessStats::default();
    let mut baseline: Vec<CleanProfile> = Vec::with_capacity(outcomes.len());
    let mut preprocess_records = Vec::new();
    for (outcome, s) in outcomes {
        stats.cloudy_samples_removed += s.cloudy_samples_removed;
        stats.ndvi_degenerate_warnings += s.ndvi_degenerate_warnings;
        match outcome {
            PreprocessOutcome::Clean(profile) => baseline.push(*profile),
            PreprocessOutcome::Eliminated(record) => preprocess_records.push(record),
        }
    }
    // Plots that lost every pixel to the sparsity gate leave here too.
    let surviving_plots = plot_set(&baseline);
    for plot_id in dataset.plots.keys() {
        if !surviving_plots.contains(plot_id) {
            preprocess_records.push(EliminationRecord::plot(
                plot_id,
                Level::Preprocess,
                Reason::NoPixels,
                "all pixels eliminated as too sparse",
            ));
        }
    }
    funnel.push(LevelCounts {
        level: Level::Preprocess.name().to_string(),
        plots_in: dataset.plots.len(),
        plots_retained: surviving_plots.len(),
        pixels_in: dataset.pixels.len(),
        pixels_retained: baseline.len(),
        eliminated_by_reason: count_reasons(&preprocess_records),
    });
    eliminations.extend(preprocess_records);

    // L1: geometric and label filters at plot granularity.
    let mut retained_l1 = baseline.clone();
    if cfg.runs_level(Level::L1) {
        levels_run.push(Level::L1);
        let live_plots: BTreeMap<String, PlotRecord> = dataset
            .plots
            .iter()
            .filter(|(id, _)| surviving_plots.contains(*id))
            .map(|(id, p)| (id.clone(), p.clone()))
            .collect();
        let outcome = l1_filter(&live_plots, &dataset.masks, &cfg.l1)?;
        let retained_ids: BTreeSet<String> = outcome.retained.iter().cloned().collect();
        let dead: BTreeSet<String> =
            live_plots.keys().filter(|id| !retained_ids.contains(*id)).cloned().collect();
        let mut records = outcome.eliminations;
        let (kept, cascades) = cascade_pixels(std::mem::take(&mut retained_l1), &dead, Level::L1);
        retained_l1 = kept;
        records.extend(cascades);
        funnel.push(LevelCounts {
            level: Level::L1.name().to_string(),
            plots_in: live_plots.len(),
            plots_retained: retained_ids.len(),
            pixels_in: baseline.len(),
            pixels_retained: retained_l1.len(),
            eliminated_by_reason: count_reasons(&records),
        });
        eliminations.extend(records);
    }

    // L2: NDVI-maximum threshold at pixel granularity.
    let mut retained_l2 = retained_l1.clone();
    if cfg.runs_level(Level::L2) {
        levels_run.push(Level::L2);
        let plots_in = plot_set(&retained_l1).len();
        let pixels_in = retained_l1.len();
        let outcome = l2_filter(retained_l1.clone(), cfg.ndvi_max_min, cfg.plot_survival_min);
        retained_l2 = outcome.retained;
        funnel.push(LevelCounts {
            level: Level::L2.name().to_string(),
            plots_in,
            plots_retained: plot_set(&retained_l2).len(),
            pixels_in,
            pixels_retained: retained_l2.len(),
            eliminated_by_reason: count_reasons(&outcome.eliminations),
        });
        eliminations.extend(outcome.eliminations);
    }

    // L3: cluster NDVI profiles, drop flat/noisy clusters.
    let mut retained_l3 = retained_l2.clone();
    let mut cluster = None;
    let mut kmeans_diagnostics = Vec::new();
    if cfg.runs_level(Level::L3) {
        levels_run.push(Level::L3);
        let plots_in = plot_set(&retained_l2).len();
        let pixels_in = retained_l2.len();
        if !retained_l2.is_empty() {
            // Count distinct profiles only as far as any k we might fit.
            let distinct_cap = if cfg.kmeans_diagnostics { cfg.k.max(12) } else { cfg.k };
            let mut distinct: Vec<&[f64]> = Vec::new();
            for p in &retained_l2 {
                if !distinct.contains(&p.ndvi.as_slice()) {
                    distinct.push(&p.ndvi);
                }
                if distinct.len() > distinct_cap {
                    break;
                }
            }
            let k_eff = cfg.k.min(distinct.len());
            let kmeans_seed = derive_seed(cfg.seed, "kmeans");
            let (mut model, fit) =
                cluster_profiles(&retained_l2, k_eff, kmeans_seed, cfg.kmeans_max_iter)?;
            model.flags = flag_clusters(&fit, &retained_l2, cfg.flat_var_max, cfg.rough_min);
            if cfg.kmeans_diagnostics {
                let points: Vec<Vec<f64>> =
                    retained_l2.iter().map(|p| p.ndvi.clone()).collect();
                for k in 4..=12 {
                    if k <= distinct.len() {
                        let diag = crate::cleaning::kmeans(
                            &points,
                            k,
                            kmeans_seed,
                            cfg.kmeans_max_iter,
                        )?;
                        kmeans_diagnostics.push((k, diag.inertia));
                    }
                }
            }
            let outcome = l3_filter(retained_l2.clone(), &model, cfg.plot_survival_min);
            retained_l3 = outcome.retained;
            funnel.push(LevelCounts {
                level: Level::L3.name().to_string(),
                plots_in,
                plots_retained: plot_set(&retained_l3).len(),
                pixels_in,
                pixels_retained: retained_l3.len(),
                eliminated_by_reason: count_reasons(&outcome.eliminations),
            });
            eliminations.extend(outcome.eliminations);
            cluster = Some(model);
        } else {
            retained_l3 = Vec::new();
            funnel.push(LevelCounts {
                level: Level::L3.name().to_string(),
                plots_in,
                plots_retained: 0,
                pixels_in,
                pixels_retained: 0,
                eliminated_by_reason: BTreeMap::new(),
            });
        }
    }

    // Verification: distance votes against expert seed medians. Flagged
    // plots are excluded from training, never relabeled.
    let mut final_training_plots = plot_set(&retained_l3);
    let mut verdicts = Vec::new();
    if cfg.runs_level(Level::Verify) {
        if let Some(seeds) = seed_plots {
            levels_run.push(Level::Verify);
            let plots_in = final_training_plots.len();
            let pixels_in = retained_l3.len();

            let mut by_plot: BTreeMap<&str, Vec<&CleanProfile>> = BTreeMap::new();
            for p in &retained_l3 {
                by_plot.entry(p.plot_id.as_str()).or_default().push(p);
            }
            let seed_map: BTreeMap<&str, &str> =
                seeds.iter().map(|(p, c)| (p.as_str(), c.as_str())).collect();

            let mut seed_embeddings = Vec::new();
            let mut to_verify = Vec::new();
            for (plot_id, profiles) in &by_plot {
                let embedding = embed_plot(plot_id, profiles)?;
                match seed_map.get(plot_id) {
                    Some(crop) => {
                        seed_embeddings.push((embedding, CropLabel::Crop(crop.to_string())))
                    }
                    None => to_verify.push(embedding),
                }
            }
            let medians = build_median_profiles(&seed_embeddings, cfg.min_seed_support)?;

            let mut records = Vec::new();
            let mut flagged: BTreeSet<String> = BTreeSet::new();
            for embedding in to_verify {
                let claimed = &dataset
                    .plots
                    .get(&embedding.plot_id)
                    .ok_or_else(|| {
                        Error::Integrity(format!("verified plot {} not in dataset", embedding.plot_id))
                    })?
                    .claimed_label;
                let verdict = verify_plot(&embedding, &medians, claimed)?;
                if verdict.decision == Decision::Flagged {
                    flagged.insert(verdict.plot_id.clone());
                    records.push(EliminationRecord::plot(
                        &verdict.plot_id,
                        Level::Verify,
                        Reason::VerifyFlagged,
                        format!("claimed {} not confirmed by distance votes", verdict.claimed),
                    ));
                }
                verdicts.push(verdict);
            }
            for plot_id in &flagged {
                final_training_plots.remove(plot_id);
            }
            let n_flagged_pixels: usize =
                retained_l3.iter().filter(|p| flagged.contains(&p.plot_id)).count();
            for p in retained_l3.iter().filter(|p| flagged.contains(&p.plot_id)) {
                records.push(EliminationRecord::pixel(
                    &p.pixel_id,
                    Level::Verify,
                    Reason::PlotEliminated,
                    format!("plot {} flagged at VERIFY", p.plot_id),
                ));
            }
            funnel.push(LevelCounts {
                level: Level::Verify.name().to_string(),
                plots_in,
                plots_retained: final_training_plots.len(),
                pixels_in,
                pixels_retained: pixels_in - n_flagged_pixels,
                eliminated_by_reason: count_reasons(&records),
            });
            eliminations.extend(records);
        }
    }

    Ok(CleanOutcome {
        baseline,
        retained_l1,
        retained_l2,
        retained_l3,
        final_training_plots,
        eliminations,
        verdicts,
        cluster,
        kmeans_diagnostics,
        preprocess_stats: stats,
        levels_run,
        funnel,
    })
}

/// One level's evaluation: the overall report plus per-district slices.
#[derive(Debug, Clone)]
pub struct LevelEval {
    pub level: EvalLevel,
    pub train_rows: usize,
    pub train_plots: usize,
    pub overall: EvalReport,
    pub by_district: Vec<(String, i32, EvalReport)>,
    /// Present only when the caller asked to keep models.
    pub model: Option<Forest>,
}

#[derive(Debug, Clone)]
pub struct TrainEvalOutcome {
    pub levels: Vec<LevelEval>,
    pub test_rows: usize,
    pub test_plots: usize,
    /// "truth" when a synth truth table labeled the test set, else "claimed".
    pub test_label_source: &'static str,
}

fn truth_label(
    truth: Option<&BTreeMap<String, TrueCondition>>,
    plot: &PlotRecord,
) -> Option<CropLabel> {
    match truth {
        Some(table) => match table.get(&plot.plot_id) {
            Some(TrueCondition::Crop(name)) => Some(CropLabel::Crop(name.clone())),
            Some(_) => None, // non-crop ground: not evaluable
            None => None,    // not in the truth table: stay out of the test set
        },
        None => plot.claimed_label.is_crop().then(|| plot.claimed_label.clone()),
    }
}

/// Train a forest per cleaning level (claimed labels) and evaluate every
/// model on one shared truth-labeled, fully cleaned test split.
pub fn run_train_eval(
    dataset: &Dataset,
    outcome: &CleanOutcome,
    truth: Option<&BTreeMap<String, TrueCondition>>,
    cfg: &RunConfig,
    keep_models: bool,
) -> Result<TrainEvalOutcome> {
    let crops = cfg.crop_set()?;

    // One plot-level split over the UNCLEAN baseline, stratified on claimed
    // labels; every level reuses it so test plots never leak into training.
    let mut claimed: BTreeMap<String, CropLabel> = BTreeMap::new();
    for plot_id in plot_set(&outcome.baseline) {
        let label = &dataset.plots[&plot_id].claimed_label;
        if label.is_crop() {
            claimed.insert(plot_id, label.clone());
        }
    }
    let (train_plots, test_plots) =
        split_plots_stratified(&claimed, cfg.test_fraction, derive_seed(cfg.seed, "split"))?;

    // Test rows: deepest-cleaned pixels of test-side plots, truth labels.
    let mut test_rows: Vec<FeatureRow> = Vec::new();
    let mut test_district: Vec<(String, i32)> = Vec::new();
    for profile in outcome.deepest() {
        if !test_plots.contains(&profile.plot_id) {
            continue;
        }
        let plot = &dataset.plots[&profile.plot_id];
        let Some(label) = truth_label(truth, plot) else { continue };
        test_rows.push(feature_row(profile, &label));
        test_district.push((plot.district.clone(), plot.season_year));
    }
    if test_rows.is_empty() {
        return Err(Error::Invalid("test split is empty after cleaning".into()));
    }

    let forest_seed = derive_seed(cfg.seed, "forest");
    let mut levels = Vec::new();
    for level in EvalLevel::ALL {
        let profiles: &[CleanProfile] = match level {
            EvalLevel::Unclean => &outcome.baseline,
            EvalLevel::L1 => {
                if !outcome.levels_run.contains(&Level::L1) {
                    continue;
                }
                &outcome.retained_l1
            }
            EvalLevel::L2 => {
                if !outcome.levels_run.contains(&Level::L2) {
                    continue;
                }
                &outcome.retained_l2
            }
            EvalLevel::L3 => {
                if !outcome.levels_run.contains(&Level::L3) {
                    continue;
                }
                &outcome.retained_l3
            }
        };
        // The final level additionally honors verification exclusions.
        let verify_gate = level == EvalLevel::L3 && outcome.levels_run.contains(&Level::Verify);

        let mut train_rows: Vec<FeatureRow> = Vec::new();
        for profile in profiles {
            if !train_plots.contains(&profile.plot_id) {
                continue;
            }
            if verify_gate && !outcome.final_training_plots.contains(&profile.plot_id) {
                continue;
            }
            let label = &dataset.plots[&profile.plot_id].claimed_label;
            if label.is_crop() {
                train_rows.push(feature_row(profile, label));
            }
        }
        if train_rows.is_empty() {
            return Err(Error::Invalid(format!(
                "no training rows left at level {}",
                level.name()
            )));
        }

        let mut forest_cfg = cfg.forest;
        forest_cfg.seed = forest_seed;
        let forest = train_forest(&train_rows, &forest_cfg)?;
        let predicted = forest.predict(&test_rows)?;
        let truth_labels: Vec<CropLabel> = test_rows.iter().map(|r| r.label.clone()).collect();
        let overall = evaluate(&predicted, &truth_labels, &crops, level)?;

        // District × year slices for the per-district report.
        let mut groups: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
        for (i, key) in test_district.iter().enumerate() {
            groups.entry(key.clone()).or_default().push(i);
        }
        let mut by_district = Vec::new();
        for ((district, year), idx) in groups {
            let p: Vec<CropLabel> = idx.iter().map(|&i| predicted[i].clone()).collect();
            let t: Vec<CropLabel> = idx.iter().map(|&i| truth_labels[i].clone()).collect();
            by_district.push((district, year, evaluate(&p, &t, &crops, level)?));
        }

        let train_plot_count = plot_set_rows(&train_rows);
        levels.push(LevelEval {
            level,
            train_rows: train_rows.len(),
            train_plots: train_plot_count,
            overall,
            by_district,
            model: keep_models.then_some(forest),
        });
    }

    Ok(TrainEvalOutcome {
        levels,
        test_rows: test_rows.len(),
        test_plots: test_plots.len(),
        test_label_source: if truth.is_some() { "truth" } else { "claimed" },
    })
}

fn plot_set_rows(rows: &[FeatureRow]) -> usize {
    rows.iter().map(|r| r.plot_id.as_str()).collect::<BTreeSet<_>>().len()
}

/// Render the Table-2 style combined Markdown report.
pub fn render_combined_markdown(outcome: &TrainEvalOutcome, cfg: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str("# Training-label quality vs classifier performance\n\n");
    out.push_str(&format!(
        "Test set: {} pixels across {} plots, labels from {}.\n\n",
        outcome.test_rows, outcome.test_plots, outcome.test_label_source
    ));
    out.push_str(&format!(
        "Forest: {} trees, seed {}, test fraction {}.\n\n",
        cfg.forest.n_trees, cfg.seed, cfg.test_fraction
    ));
    out.push_str("| District | Crop | Year | Level | Precision | TPR | F1 |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");

    // Rows grouped by district then crop, levels in chain order, mirroring
    // the per-district report table layout.
    let mut keys: BTreeSet<(String, i32, String)> = BTreeSet::new();
    for level in &outcome.levels {
        for (district, year, report) in &level.by_district {
            for m in &report.per_crop {
                keys.insert((district.clone(), *year, m.crop.clone()));
            }
        }
    }
    for (district, year, crop) in keys {
        for level in &outcome.levels {
            for (d, y, report) in &level.by_district {
                if d != &district || *y != year {
                    continue;
                }
                if let Some(m) = report.per_crop.iter().find(|m| m.crop == crop) {
                    out.push_str(&format!(
                        "| {district} | {crop} | {year} | {} | {} | {} | {} |\n",
                        level.level.name(),
                        percent(m.precision),
                        percent(m.recall),
                        percent(m.f1),
                    ));
                }
            }
        }
    }
    out.push('\n');
    out.push_str("Macro-F1 by training level (all districts):\n\n");
    for level in &outcome.levels {
        out.push_str(&format!(
            "- {}: {:.1}\n",
            level.level.name(),
            level.overall.macro_f1() * 100.0
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, NoiseSpec, SynthSpec};

    fn small_outcome(noise: NoiseSpec, seed: u64) -> (Dataset, CleanOutcome, RunConfig) {
        let spec = SynthSpec::new(8, 4, noise, seed);
        let out = generate_dataset(&spec).unwrap();
        let (dataset, prior) = crate::ingest::join_and_check(
            out.plots.clone(),
            out.pixels.clone(),
            out.masks.clone(),
            spec.grid,
        )
        .unwrap();
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.k = 4;
        cfg.min_seed_support = 3;
        let seeds = crate::synth::pick_seed_plots(&out, 3).unwrap();
        let outcome = run_clean(&dataset, &cfg, Some(&seeds), prior).unwrap();
        (dataset, outcome, cfg)
    }

    #[test]
    fn monotone_retention_chain() {
        let mut noise = NoiseSpec::zero();
        noise.non_ag_rate = 0.2;
        noise.perennial_rate = 0.1;
        let (_, outcome, _) = small_outcome(noise, 5);
        let base = plot_set(&outcome.baseline);
        let l1 = plot_set(&outcome.retained_l1);
        let l2 = plot_set(&outcome.retained_l2);
        let l3 = plot_set(&outcome.retained_l3);
        assert!(l1.is_subset(&base));
        assert!(l2.is_subset(&l1));
        assert!(l3.is_subset(&l2));
        assert!(outcome.final_training_plots.is_subset(&l3));

        let px = |ps: &[CleanProfile]| -> BTreeSet<String> {
            ps.iter().map(|p| p.pixel_id.clone()).collect()
        };
        assert!(px(&outcome.retained_l1).is_subset(&px(&outcome.baseline)));
        assert!(px(&outcome.retained_l2).is_subset(&px(&outcome.retained_l1)));
        assert!(px(&outcome.retained_l3).is_subset(&px(&outcome.retained_l2)));
    }

    #[test]
    fn elimination_records_reconcile_with_funnel() {
        let mut noise = NoiseSpec::zero();
        noise.non_ag_rate = 0.2;
        let (_, outcome, _) = small_outcome(noise, 9);
        // Exactly one record per eliminated subject.
        let mut ids: Vec<(&str, &str)> = outcome
            .eliminations
            .iter()
            .map(|r| (r.subject_id.as_str(), r.subject.name()))
            .collect();
        let before = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), before, "duplicate elimination records");

        // Funnel counts match the record stream per level.
        for counts in &outcome.funnel {
            let recorded: usize = counts.eliminated_by_reason.values().sum();
            let expected = (counts.plots_in - counts.plots_retained)
                + (counts.pixels_in - counts.pixels_retained);
            assert_eq!(recorded, expected, "level {}", counts.level);
        }
    }

    #[test]
    fn every_retained_l2_profile_clears_threshold() {
        let mut noise = NoiseSpec::zero();
        noise.non_ag_rate = 0.3;
        let (_, outcome, cfg) = small_outcome(noise, 3);
        for p in &outcome.retained_l2 {
            let max = p.ndvi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(max >= cfg.ndvi_max_min);
        }
    }

    #[test]
    fn train_eval_produces_all_levels() {
        let mut noise = NoiseSpec::zero();
        noise.mislabel_rate = 0.2;
        let (dataset, outcome, cfg) = small_outcome(noise, 11);
        let spec_truth: BTreeMap<String, TrueCondition> = {
            let spec = SynthSpec::new(8, 4, noise, 11);
            let out = generate_dataset(&spec).unwrap();
            out.truth.into_iter().collect()
        };
        let eval = run_train_eval(&dataset, &outcome, Some(&spec_truth), &cfg, false).unwrap();
        let names: Vec<&str> = eval.levels.iter().map(|l| l.level.name()).collect();
        assert_eq!(names, vec!["UNCLEAN", "L1", "L2", "L3"]);
        assert_eq!(eval.test_label_source, "truth");
        for level in &eval.levels {
            assert_eq!(level.overall.total_rows(), eval.test_rows);
        }
    }
}
