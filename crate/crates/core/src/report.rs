//! Output files: per-level retained snapshots, the elimination audit CSV,
//! verdicts, the run manifest, per-level metric CSVs, and the Markdown
//! funnel report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::metrics::percent;
use crate::config::RunConfig;
use crate::error::Result;
use crate::model::{EliminationRecord, Level};
use crate::pipeline::{CleanOutcome, LevelCounts, TrainEvalOutcome};
use crate::preprocess::CleanProfile;
use crate::verify::Verdict;

/// Deterministic snapshot of one run; wall time deliberately lives in a
/// separate timing file so two identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub levels_run: Vec<String>,
    pub funnel: Vec<LevelCounts>,
    pub cloudy_samples_removed: usize,
    pub ndvi_degenerate_warnings: usize,
    pub kmeans_diagnostics: Vec<(usize, f64)>,
    /// Per training level: (level, per-crop (crop, precision%, tpr%, f1%),
    /// macro F1 in percent at full precision).
    pub metrics: Vec<LevelMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: String,
    pub train_rows: usize,
    pub train_plots: usize,
    pub per_crop: Vec<CropRow>,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CropRow {
    pub crop: String,
    pub support: usize,
    pub precision: u32,
    pub tpr: u32,
    pub f1: u32,
}

pub fn build_manifest(cfg: &RunConfig, outcome: &CleanOutcome) -> RunManifest {
    // The snapshot documents the run's inputs and thresholds; where the
    // outputs landed is evident from the manifest's own location.
    let mut config = cfg.clone();
    config.paths.out_dir = std::path::PathBuf::new();
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        levels_run: outcome.levels_run.iter().map(|l| l.name().to_string()).collect(),
        funnel: outcome.funnel.clone(),
        cloudy_samples_removed: outcome.preprocess_stats.cloudy_samples_removed,
        ndvi_degenerate_warnings: outcome.preprocess_stats.ndvi_degenerate_warnings,
        kmeans_diagnostics: outcome.kmeans_diagnostics.clone(),
        metrics: Vec::new(),
    }
}

pub fn attach_metrics(manifest: &mut RunManifest, eval: &TrainEvalOutcome) {
    manifest.metrics = eval
        .levels
        .iter()
        .map(|level| LevelMetrics {
            level: level.level.name().to_string(),
            train_rows: level.train_rows,
            train_plots: level.train_plots,
            per_crop: level
                .overall
                .per_crop
                .iter()
                .map(|m| CropRow {
                    crop: m.crop.clone(),
                    support: m.support,
                    precision: percent(m.precision),
                    tpr: percent(m.recall),
                    f1: percent(m.f1),
                })
                .collect(),
            macro_f1: level.overall.macro_f1() * 100.0,
        })
        .collect();
}

/// `plot_id,pixel_id` rows sorted for byte determinism.
pub fn write_retained_csv(path: &Path, profiles: &[CleanProfile]) -> Result<()> {
    let mut rows: Vec<(&str, &str)> =
        profiles.iter().map(|p| (p.plot_id.as_str(), p.pixel_id.as_str())).collect();
    rows.sort();
    let mut out = String::from("plot_id,pixel_id\n");
    for (plot, pixel) in rows {
        let _ = writeln!(out, "{plot},{pixel}");
    }
    fs::write(path, out)?;
    Ok(())
}

fn level_order(level: Level) -> usize {
    match level {
        Level::Ingest => 0,
        Level::Preprocess => 1,
        Level::L1 => 2,
        Level::L2 => 3,
        Level::L3 => 4,
        Level::Verify => 5,
    }
}

pub fn write_eliminations_csv(path: &Path, records: &[EliminationRecord]) -> Result<()> {
    let mut sorted: Vec<&EliminationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (level_order(r.level), r.subject.name(), r.subject_id.as_str()));
    let mut out = String::from("subject_id,subject_kind,level,reason,detail\n");
    for r in sorted {
        let detail = r.detail.replace(',', ";"); // keep the CSV single-shape
        let _ = writeln!(
            out,
            "{},{},{},{},{detail}",
            r.subject_id,
            r.subject.name(),
            r.level.name(),
            r.reason.name()
        );
    }
    fs::write(path, out)?;
    Ok(())
}

fn vote_str(vote: &Option<crate::model::CropLabel>) -> &str {
    match vote {
        Some(label) => label.as_str(),
        None => "-",
    }
}

pub fn write_verdicts_csv(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let mut sorted: Vec<&Verdict> = verdicts.iter().collect();
    sorted.sort_by_key(|v| v.plot_id.as_str());
    let mut out =
        String::from("plot_id,claimed,vote_cosine,vote_pearson,vote_manhattan,decision\n");
    for v in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            v.plot_id,
            v.claimed,
            vote_str(&v.vote_cosine),
            vote_str(&v.vote_pearson),
            vote_str(&v.vote_manhattan),
            v.decision.name()
        );
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_kmeans_diagnostics_csv(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("k,inertia\n");
    for (k, inertia) in rows {
        let _ = writeln!(out, "{k},{inertia:.6}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Everything cmd_clean leaves on disk.
pub fn write_clean_outputs(out_dir: &Path, outcome: &CleanOutcome, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    if outcome.levels_run.contains(&Level::L1) {
        write_retained_csv(&out_dir.join("retained_L1.csv"), &outcome.retained_l1)?;
    }
    if outcome.levels_run.contains(&Level::L2) {
        write_retained_csv(&out_dir.join("retained_L2.csv"), &outcome.retained_l2)?;
    }
    if outcome.levels_run.contains(&Level::L3) {
        write_retained_csv(&out_dir.join("retained_L3.csv"), &outcome.retained_l3)?;
    }
    if outcome.levels_run.contains(&Level::Verify) {
        let final_profiles: Vec<CleanProfile> = outcome
            .retained_l3
            .iter()
            .filter(|p| outcome.final_training_plots.contains(&p.plot_id))
            .cloned()
            .collect();
        write_retained_csv(&out_dir.join("retained_final.csv"), &final_profiles)?;
        write_verdicts_csv(&out_dir.join("verdicts.csv"), &outcome.verdicts)?;
    }
    write_eliminations_csv(&out_dir.join("eliminations.csv"), &outcome.eliminations)?;
    if !outcome.kmeans_diagnostics.is_empty() {
        write_kmeans_diagnostics_csv(
            &out_dir.join("kmeans_diagnostics.csv"),
            &outcome.kmeans_diagnostics,
        )?;
    }
    let manifest = build_manifest(cfg, outcome);
    write_manifest(out_dir, &manifest)?;
    Ok(())
}

pub fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Per-level `district,crop,year,level,precision,tpr,f1` CSVs.
pub fn write_level_reports(out_dir: &Path, eval: &TrainEvalOutcome) -> Result<()> {
    for level in &eval.levels {
        let mut out = String::from("district,crop,year,level,precision,tpr,f1\n");
        for (district, year, report) in &level.by_district {
            for m in &report.per_crop {
                let _ = writeln!(
                    out,
                    "{district},{},{year},{},{},{},{}",
                    m.crop,
                    level.level.name(),
                    percent(m.precision),
                    percent(m.recall),
                    percent(m.f1)
                );
            }
        }
        fs::write(out_dir.join(format!("report_{}.csv", level.level.name())), out)?;
    }
    Ok(())
}

/// Human-readable funnel + metric-delta summary from a manifest.
pub fn render_report_markdown(manifest: &RunManifest) -> String {
    let mut out = String::new();
    out.push_str("# Cleaning funnel\n\n");
    out.push_str("| Level | Plots in | Plots kept | Pixels in | Pixels kept | Eliminations |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for counts in &manifest.funnel {
        let reasons: Vec<String> = counts
            .eliminated_by_reason
            .iter()
            .map(|(reason, n)| format!("{reason}: {n}"))
            .collect();
        let reasons = if reasons.is_empty() { "-".to_string() } else { reasons.join("; ") };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            counts.level,
            counts.plots_in,
            counts.plots_retained,
            counts.pixels_in,
            counts.pixels_retained,
            reasons
        );
    }
    if let Some(first) = manifest.funnel.first() {
        let last = manifest.funnel.last().unwrap();
        if first.pixels_in > 0 {
            let _ = writeln!(
                out,
                "\nOverall retention: {:.1}% of pixels, {:.1}% of plots.",
                100.0 * last.pixels_retained as f64 / first.pixels_in as f64,
                100.0 * last.plots_retained as f64 / first.plots_in as f64,
            );
        }
    }

    if !manifest.metrics.is_empty() {
        out.push_str("\n# Classifier performance by training level\n\n");
        out.push_str("| Level | Train plots | Train pixels | Macro F1 |\n");
        out.push_str("|---|---|---|---|\n");
        let mut deltas: Vec<(usize, f64)> = Vec::new();
        for (i, m) in manifest.metrics.iter().enumerate() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.1} |",
                m.level, m.train_plots, m.train_rows, m.macro_f1
            );
            if i > 0 {
                deltas.push((i, m.macro_f1 - manifest.metrics[i - 1].macro_f1));
            }
        }
        if let Some(&(idx, delta)) =
            deltas.iter().max_by(|a, b| a.1.total_cmp(&b.1))
        {
            let _ = writeln!(
                out,
                "\nLargest macro-F1 delta: {} → {} ({:+.1} points).",
                manifest.metrics[idx - 1].level, manifest.metrics[idx].level, delta
            );
        }
        out.push_str("\n| Level | Crop | Precision | TPR | F1 | Support |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for m in &manifest.metrics {
            for row in &m.per_crop {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    m.level, row.crop, row.precision, row.tpr, row.f1, row.support
                );
            }
        }
    }
    out
}

/// Reason-count reconciliation between a manifest and the audit CSV text.
pub fn manifest_reconciles(manifest: &RunManifest, eliminations_csv: &str) -> bool {
    let mut from_csv: BTreeMap<(String, String), usize> = BTreeMap::new();
    for line in eliminations_csv.lines().skip(1) {
        let mut fields = line.split(',');
        let (_id, _kind, level, reason) = (
            fields.next().unwrap_or(""),
            fields.next().unwrap_or(""),
            fields.next().unwrap_or("").to_string(),
            fields.next().unwrap_or("").to_string(),
        );
        *from_csv.entry((level, reason)).or_insert(0) += 1;
    }
    let mut from_manifest: BTreeMap<(String, String), usize> = BTreeMap::new();
    for counts in &manifest.funnel {
        for (reason, n) in &counts.eliminated_by_reason {
            *from_manifest.entry((counts.level.clone(), reason.clone())).or_insert(0) += n;
        }
    }
    from_csv == from_manifest
}
