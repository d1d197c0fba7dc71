//! Run configuration: one JSON file holding every path, threshold, and
//! seed, with documented defaults so runs are self-describing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::ForestConfig;
use crate::cleaning::L1Config;
use crate::error::{Error, Result};
use crate::model::{CropSet, Level, TimeGrid};
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PathsConfig {
    pub plots: PathBuf,
    pub pixels: PathBuf,
    pub masks: PathBuf,
    /// Expert seed-verification CSV; verification is skipped without it.
    pub seeds: Option<PathBuf>,
    /// Synth truth table, used as test labels when present.
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub crops: Vec<String>,
    pub grid: TimeGrid,
    pub preprocess: PreprocessConfig,
    pub l1: L1Config,
    /// Vegetation floor for the L2 max-NDVI test.
    pub ndvi_max_min: f64,
    /// Minimum fraction of a plot's pixels that must survive a pixel
    /// filter before the whole plot is dropped.
    pub plot_survival_min: f64,
    pub k: usize,
    pub kmeans_max_iter: usize,
    /// Report inertia for k in 4..=12 alongside the chosen k.
    pub kmeans_diagnostics: bool,
    pub flat_var_max: f64,
    pub rough_min: f64,
    pub min_seed_support: usize,
    pub forest: ForestConfig,
    pub test_fraction: f64,
    /// Master seed; every stage derives its own from this.
    pub seed: u64,
    /// Cleaning levels to run, in chain order.
    pub levels: Vec<Level>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsConfig::default(),
            crops: vec!["mustard".into(), "paddy".into(), "wheat".into()],
            grid: TimeGrid::default(),
            preprocess: PreprocessConfig::default(),
            l1: L1Config::default(),
            ndvi_max_min: 0.40,
            plot_survival_min: 0.3,
            k: 8,
            kmeans_max_iter: 100,
            kmeans_diagnostics: false,
            flat_var_max: 0.005,
            rough_min: 0.01,
            min_seed_support: 5,
            forest: ForestConfig::default(),
            test_fraction: 0.3,
            seed: 42,
            levels: vec![Level::L1, Level::L2, Level::L3, Level::Verify],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn crop_set(&self) -> Result<CropSet> {
        CropSet::from_names(self.crops.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.crop_set()?;
        for (name, v) in [
            ("ndvi_max_min", self.ndvi_max_min),
            ("plot_survival_min", self.plot_survival_min),
            ("mask_overlap_max", self.l1.mask_overlap_max),
            ("plot_overlap_max", self.l1.plot_overlap_max),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.flat_var_max < 0.0 || self.rough_min < 0.0 {
            return Err(Error::Config("cluster flag thresholds must be ≥ 0".into()));
        }
        if self.forest.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if self.min_seed_support == 0 {
            return Err(Error::Config("min_seed_support must be positive".into()));
        }
        // Levels must form a prefix of the chain; running L3 without L2
        // would silently change every threshold's meaning.
        let chain = [Level::L1, Level::L2, Level::L3, Level::Verify];
        if self.levels.is_empty()
            || self.levels.len() > chain.len()
            || self.levels != chain[..self.levels.len()]
        {
            return Err(Error::Config(format!(
                "levels must be a non-empty prefix of L1,L2,L3,VERIFY in order; got {:?}",
                self.levels.iter().map(|l| l.name()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn runs_level(&self, level: Level) -> bool {
        self.levels.contains(&level)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Parse a `--levels` style comma list ("L1,L2,L3,VERIFY").
pub fn parse_levels(s: &str) -> Result<Vec<Level>> {
    s.split(',')
        .map(|tok| match tok.trim() {
            "L1" => Ok(Level::L1),
            "L2" => Ok(Level::L2),
            "L3" => Ok(Level::L3),
            "VERIFY" => Ok(Level::Verify),
            other => Err(Error::Config(format!("unknown level {other:?}"))),
        })
        .collect()
}
