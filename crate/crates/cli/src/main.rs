//! `gtclean` — batch pipeline for cleaning crop ground-truth data and
//! measuring what the cleaning buys a Random Forest classifier.
//!
//! Subcommands: `synth`, `clean`, `train-eval`, `report`, `fcc`.
//! Exit codes: 0 ok, 1 runtime error, 2 usage/config error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gtclean_core::config::{parse_levels, RunConfig};
use gtclean_core::error::{Error, Result};
use gtclean_core::fcc::{render_fcc_chip, write_png};
use gtclean_core::ingest::{load_dataset, Dataset};
use gtclean_core::model::EliminationRecord;
use gtclean_core::pipeline::{run_clean, run_train_eval, render_combined_markdown, CleanOutcome};
use gtclean_core::preprocess::{preprocess_pixel, CleanProfile, PreprocessOutcome};
use gtclean_core::report::{
    attach_metrics, build_manifest, load_manifest, render_report_markdown, write_clean_outputs,
    write_level_reports, write_manifest,
};
use gtclean_core::synth::{
    generate_dataset, parse_seeds_csv, parse_truth_csv, write_dataset_files, NoiseSpec, SynthSpec,
    TrueCondition,
};

#[derive(Parser)]
#[command(name = "gtclean", version, about = "Ground-truth cleaning and crop classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON config file; flags override individual keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every stage derives its own from it
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cleaning levels to run, e.g. "L1,L2,L3,VERIFY"
    #[arg(long)]
    levels: Option<String>,
}

#[derive(Args, Clone)]
struct InputOpts {
    /// Plots GeoJSON path
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Pixel time-series CSV path
    #[arg(long)]
    pixels: Option<PathBuf>,
    /// Masks GeoJSON path
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Expert seed-verification CSV (enables the VERIFY level)
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Synth truth table (labels the test split in train-eval)
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a known truth table
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 200)]
        plots_per_crop: usize,
        #[arg(long, default_value_t = 20)]
        pixels_per_plot: usize,
        #[arg(long, default_value_t = 1)]
        districts: usize,
        #[arg(long, default_value_t = 0.0)]
        mislabel: f64,
        #[arg(long, default_value_t = 0.0)]
        non_ag: f64,
        #[arg(long, default_value_t = 0.0)]
        perennial: f64,
        #[arg(long, default_value_t = 0.0)]
        boundary: f64,
        #[arg(long, default_value_t = 0.0)]
        cloud: f64,
        #[arg(long, default_value_t = 0.0)]
        multi_crop: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        /// Field-to-field phenology variation (days)
        #[arg(long, default_value_t = NoiseSpec::DEFAULT_JITTER_DAYS)]
        jitter: f64,
        /// Also emit seeds.csv with this many verified plots per crop
        #[arg(long, default_value_t = 0)]
        seeds_per_crop: usize,
    },
    /// Run the cleaning levels and write retained/elimination snapshots
    Clean {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        inputs: InputOpts,
        /// Also report K-means inertia for k in 4..=12
        #[arg(long)]
        k_diagnostics: bool,
    },
    /// Train a forest per cleaning level and evaluate on the clean test split
    TrainEval {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        inputs: InputOpts,
        /// Persist each level's forest as model_<LEVEL>.json
        #[arg(long)]
        save_models: bool,
    },
    /// Render the Markdown funnel/metrics report from a manifest
    Report {
        /// Path to manifest.json
        #[arg(long)]
        manifest: PathBuf,
        /// Output path (default: report.md next to the manifest)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a False Colour Composite chip for one plot
    Fcc {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        inputs: InputOpts,
        /// Plot to render
        #[arg(long)]
        plot: String,
        /// Day of season (snapped to the nearest grid step; default mid-season)
        #[arg(long)]
        day: Option<i32>,
        /// Output image size in pixels
        #[arg(long, default_value_t = 128)]
        size: u32,
    },
}

fn build_config(common: &CommonOpts, inputs: Option<&InputOpts>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.paths.out_dir = out.clone();
    }
    if let Some(levels) = &common.levels {
        cfg.levels = parse_levels(levels)?;
    }
    if let Some(inputs) = inputs {
        if let Some(p) = &inputs.plots {
            cfg.paths.plots = p.clone();
        }
        if let Some(p) = &inputs.pixels {
            cfg.paths.pixels = p.clone();
        }
        if let Some(p) = &inputs.masks {
            cfg.paths.masks = p.clone();
        }
        if let Some(p) = &inputs.seeds {
            cfg.paths.seeds = Some(p.clone());
        }
        if let Some(p) = &inputs.truth {
            cfg.paths.truth = Some(p.clone());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(cfg: &RunConfig) -> Result<&Path> {
    if cfg.paths.out_dir.as_os_str().is_empty() {
        return Err(Error::Config("an output directory is required (--out)".into()));
    }
    Ok(&cfg.paths.out_dir)
}

fn read_file(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_inputs(cfg: &RunConfig) -> Result<(Dataset, Vec<EliminationRecord>)> {
    let plots = read_file(&cfg.paths.plots, "plots file")?;
    let pixels = read_file(&cfg.paths.pixels, "pixel file")?;
    let masks = read_file(&cfg.paths.masks, "masks file")?;
    load_dataset(&plots, &pixels, &masks, &cfg.crop_set()?, cfg.grid)
}

fn load_seed_plots(cfg: &RunConfig) -> Result<Option<Vec<(String, String)>>> {
    match &cfg.paths.seeds {
        Some(path) => {
            let text = read_file(path, "seeds file")?;
            Ok(Some(parse_seeds_csv(&text)?))
        }
        None => Ok(None),
    }
}

fn run_clean_stage(cfg: &RunConfig) -> Result<CleanOutcome> {
    let (dataset, prior) = load_inputs(cfg)?;
    let seeds = load_seed_plots(cfg)?;
    run_clean(&dataset, cfg, seeds.as_deref(), prior)
}

fn write_timing(out_dir: &Path, started: Instant) -> Result<()> {
    // Timing lives outside the manifest so identical runs stay
    // byte-identical in every data output.
    let wall_ms = started.elapsed().as_millis();
    fs::write(out_dir.join("timing.json"), format!("{{\"wall_time_ms\": {wall_ms}}}\n"))?;
    eprintln!("done in {wall_ms} ms");
    Ok(())
}

fn cmd_synth(
    common: CommonOpts,
    plots_per_crop: usize,
    pixels_per_plot: usize,
    districts: usize,
    noise: NoiseSpec,
    jitter_seed: u64,
    seeds_per_crop: usize,
) -> Result<()> {
    let cfg = build_config(&common, None)?;
    let out_dir = require_out(&cfg)?;
    let mut spec = SynthSpec::new(plots_per_crop, pixels_per_plot, noise, jitter_seed);
    spec.grid = cfg.grid;
    spec.districts = (1..=districts.max(1)).map(|i| format!("D{i}")).collect();
    let output = generate_dataset(&spec)?;
    write_dataset_files(out_dir, &output, seeds_per_crop)?;
    eprintln!(
        "wrote {} plots, {} pixels to {}",
        output.plots.len(),
        output.pixels.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_clean(common: CommonOpts, inputs: InputOpts, k_diagnostics: bool) -> Result<()> {
    let started = Instant::now();
    let mut cfg = build_config(&common, Some(&inputs))?;
    cfg.kmeans_diagnostics = cfg.kmeans_diagnostics || k_diagnostics;
    let out_dir = require_out(&cfg)?.to_path_buf();
    let outcome = run_clean_stage(&cfg)?;
    write_clean_outputs(&out_dir, &outcome, &cfg)?;
    for counts in &outcome.funnel {
        eprintln!(
            "{:10} plots {} -> {}, pixels {} -> {}",
            counts.level,
            counts.plots_in,
            counts.plots_retained,
            counts.pixels_in,
            counts.pixels_retained
        );
    }
    write_timing(&out_dir, started)
}

fn cmd_train_eval(common: CommonOpts, inputs: InputOpts, save_models: bool) -> Result<()> {
    let started = Instant::now();
    let cfg = build_config(&common, Some(&inputs))?;
    let out_dir = require_out(&cfg)?.to_path_buf();
    fs::create_dir_all(&out_dir)?;

    let (dataset, prior) = load_inputs(&cfg)?;
    let seeds = load_seed_plots(&cfg)?;
    let outcome = run_clean(&dataset, &cfg, seeds.as_deref(), prior)?;

    let truth: Option<BTreeMap<String, TrueCondition>> = match &cfg.paths.truth {
        Some(path) => {
            let text = read_file(path, "truth file")?;
            Some(parse_truth_csv(&text, &cfg.crop_set()?)?.into_iter().collect())
        }
        None => None,
    };

    let eval = run_train_eval(&dataset, &outcome, truth.as_ref(), &cfg, save_models)?;
    write_level_reports(&out_dir, &eval)?;
    fs::write(out_dir.join("report_combined.md"), render_combined_markdown(&eval, &cfg))?;
    if save_models {
        for level in &eval.levels {
            if let Some(model) = &level.model {
                fs::write(
                    out_dir.join(format!("model_{}.json", level.level.name())),
                    model.to_json()?,
                )?;
            }
        }
    }
    let mut manifest = build_manifest(&cfg, &outcome);
    attach_metrics(&mut manifest, &eval);
    write_manifest(&out_dir, &manifest)?;
    for level in &eval.levels {
        eprintln!(
            "{:8} macro-F1 {:.1} ({} training pixels)",
            level.level.name(),
            level.overall.macro_f1() * 100.0,
            level.train_rows
        );
    }
    write_timing(&out_dir, started)
}

fn cmd_report(manifest_path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let manifest = load_manifest(&manifest_path)?;
    let rendered = render_report_markdown(&manifest);
    let out_path = out.unwrap_or_else(|| {
        manifest_path.parent().unwrap_or(Path::new(".")).join("report.md")
    });
    fs::write(&out_path, rendered)?;
    eprintln!("wrote {}", out_path.display());
    Ok(())
}

fn cmd_fcc(
    common: CommonOpts,
    inputs: InputOpts,
    plot: String,
    day: Option<i32>,
    size: u32,
) -> Result<()> {
    let cfg = build_config(&common, Some(&inputs))?;
    let out_dir = require_out(&cfg)?.to_path_buf();
    fs::create_dir_all(&out_dir)?;
    let (dataset, _) = load_inputs(&cfg)?;
    let plot_record = dataset
        .plots
        .get(&plot)
        .ok_or_else(|| Error::Invalid(format!("plot {plot:?} not found")))?;

    let n_observable = dataset.observable_days();
    let mut profiles: Vec<CleanProfile> = Vec::new();
    for pixel_id in &plot_record.pixel_ids {
        let pixel = &dataset.pixels[pixel_id];
        let (outcome, _) = preprocess_pixel(pixel, &dataset.grid, n_observable, &cfg.preprocess)?;
        if let PreprocessOutcome::Clean(profile) = outcome {
            profiles.push(*profile);
        }
    }
    let refs: Vec<&CleanProfile> = profiles.iter().collect();
    let day = day.unwrap_or_else(|| dataset.grid.day(dataset.grid.n_steps / 2));
    let step = dataset.grid.nearest_step(day);
    let chip = render_fcc_chip(&refs, step, size)?;
    let path = out_dir.join(format!("{}_{}.png", plot, dataset.grid.day(step)));
    write_png(&chip, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            plots_per_crop,
            pixels_per_plot,
            districts,
            mislabel,
            non_ag,
            perennial,
            boundary,
            cloud,
            multi_crop,
            noise_sd,
            jitter,
            seeds_per_crop,
        } => {
            let noise = NoiseSpec {
                mislabel_rate: mislabel,
                non_ag_rate: non_ag,
                perennial_rate: perennial,
                boundary_pixel_rate: boundary,
                cloud_rate: cloud,
                multi_crop_polygon_rate: multi_crop,
                reflectance_noise_sd: noise_sd,
                phenology_jitter_days: jitter,
            };
            let seed = common.seed.unwrap_or(42);
            cmd_synth(common, plots_per_crop, pixels_per_plot, districts, noise, seed, seeds_per_crop)
        }
        Command::Clean { common, inputs, k_diagnostics } => cmd_clean(common, inputs, k_diagnostics),
        Command::TrainEval { common, inputs, save_models } => {
            cmd_train_eval(common, inputs, save_models)
        }
        Command::Report { manifest, out } => cmd_report(manifest, out),
        Command::Fcc { common, inputs, plot, day, size } => {
            cmd_fcc(common, inputs, plot, day, size)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}: {err}", err.code());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
