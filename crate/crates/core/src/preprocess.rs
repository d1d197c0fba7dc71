//! Per-pixel signal conditioning: cloud removal, linear gap interpolation
//! onto the shared time grid, moving-average smoothing, and NDVI derivation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, BandGrid, EliminationRecord, Level, PixelProfile, Reason, TimeGrid};

/// A fully conditioned profile: 5 × n_steps band matrix on the shared grid
/// plus the NDVI vector derived from it. No missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanProfile {
    pub pixel_id: String,
    pub plot_id: String,
    pub bands: BandGrid,
    pub ndvi: Vec<f64>,
    pub spatial: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Moving-average window; must be odd. 1 disables smoothing.
    pub smooth_window: usize,
    /// Minimum fraction of the run-wide acquisition count a pixel must
    /// retain after cloud removal.
    pub min_clear_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { smooth_window: 3, min_clear_fraction: 0.5 }
    }
}

/// Outcome of preprocessing one pixel.
#[derive(Debug, Clone)]
pub enum PreprocessOutcome {
    Clean(Box<CleanProfile>),
    Eliminated(EliminationRecord),
}

/// Counters worth surfacing in the run manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessStats {
    pub cloudy_samples_removed: usize,
    pub ndvi_degenerate_warnings: usize,
}

/// Remove samples flagged cloudy from all bands at the same days.
pub fn drop_cloudy(profile: &PixelProfile) -> (PixelProfile, usize) {
    let keep: Vec<usize> =
        (0..profile.len()).filter(|&i| !profile.cloudy[i]).collect();
    let removed = profile.len() - keep.len();
    let mut bands = BandGrid::default();
    for b in 0..5 {
        bands.0[b] = keep.iter().map(|&i| profile.bands.0[b][i]).collect();
    }
    (
        PixelProfile {
            pixel_id: profile.pixel_id.clone(),
            plot_id: profile.plot_id.clone(),
            days: keep.iter().map(|&i| profile.days[i]).collect(),
            cloudy: vec![false; keep.len()],
            bands,
            spatial: profile.spatial,
        },
        removed,
    )
}

/// Linear interpolation of one band's samples onto the grid days, with
/// constant extrapolation outside the sampled range. Grid days that hit a
/// sample day exactly reproduce the sample value.
fn resample_band(days: &[i32], values: &[f64], grid: &TimeGrid) -> Vec<f64> {
    debug_assert!(days.len() >= 2 && days.len() == values.len());
    let mut out = Vec::with_capacity(grid.n_steps);
    for day in grid.days() {
        let v = if day <= days[0] {
            values[0]
        } else if day >= days[days.len() - 1] {
            values[values.len() - 1]
        } else {
            // Index of the first sample at or after `day`.
            let hi = days.partition_point(|&d| d < day);
            if days[hi] == day {
                values[hi]
            } else {
                let lo = hi - 1;
                let t = (day - days[lo]) as f64 / (days[hi] - days[lo]) as f64;
                values[lo] + t * (values[hi] - values[lo])
            }
        };
        out.push(v);
    }
    out
}

/// Resample all five bands onto the grid. Pixels with fewer than
/// max(2, ceil(min_clear_fraction · n_observable)) samples are rejected
/// with a `TooSparse` signal.
pub fn resample_linear(
    profile: &PixelProfile,
    grid: &TimeGrid,
    n_observable: usize,
    min_clear_fraction: f64,
) -> std::result::Result<BandGrid, EliminationRecord> {
    let needed = ((n_observable as f64 * min_clear_fraction).ceil() as usize).max(2);
    if profile.len() < needed {
        return Err(EliminationRecord::pixel(
            &profile.pixel_id,
            Level::Preprocess,
            Reason::TooSparse,
            format!("{} clear samples, needed {needed}", profile.len()),
        ));
    }
    let mut bands = BandGrid::default();
    for b in 0..5 {
        bands.0[b] = resample_band(&profile.days, &profile.bands.0[b], grid);
    }
    Ok(bands)
}

/// Centered moving average. Near the edges the window truncates to the
/// available values; window 1 is the identity.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("smoothing window {window} must be odd and positive")));
    }
    if window > series.len() {
        return Err(Error::Config(format!(
            "smoothing window {window} exceeds series length {}",
            series.len()
        )));
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(series.len());
        let sum: f64 = series[lo..hi].iter().sum();
        out.push(sum / (hi - lo) as f64);
    }
    Ok(out)
}

/// Elementwise (nir − red) / (nir + red). Non-positive denominators yield
/// 0 and bump the returned warning counter instead of failing the pixel.
pub fn compute_ndvi(nir: &[f64], red: &[f64]) -> Result<(Vec<f64>, usize)> {
    if nir.len() != red.len() {
        return Err(Error::Invalid(format!(
            "NDVI length mismatch: nir {} vs red {}",
            nir.len(),
            red.len()
        )));
    }
    let mut warns = 0usize;
    let ndvi = nir
        .iter()
        .zip(red.iter())
        .map(|(&n, &r)| {
            let denom = n + r;
            if denom > 0.0 {
                (n - r) / denom
            } else {
                warns += 1;
                0.0
            }
        })
        .collect();
    Ok((ndvi, warns))
}

/// Full conditioning pipeline for one pixel:
/// drop_cloudy → resample_linear → smooth(each band) → compute_ndvi.
pub fn preprocess_pixel(
    profile: &PixelProfile,
    grid: &TimeGrid,
    n_observable: usize,
    cfg: &PreprocessConfig,
) -> Result<(PreprocessOutcome, PreprocessStats)> {
    let mut stats = PreprocessStats::default();
    let (clear, removed) = drop_cloudy(profile);
    stats.cloudy_samples_removed = removed;

    let bands = match resample_linear(&clear, grid, n_observable, cfg.min_clear_fraction) {
        Ok(b) => b,
        Err(record) => return Ok((PreprocessOutcome::Eliminated(record), stats)),
    };

    let mut smoothed = BandGrid::default();
    for b in 0..5 {
        smoothed.0[b] = smooth(&bands.0[b], cfg.smooth_window)?;
    }
    let (ndvi, warns) =
        compute_ndvi(&smoothed[Band::Nir], &smoothed[Band::Red])?;
    stats.ndvi_degenerate_warnings = warns;

    Ok((
        PreprocessOutcome::Clean(Box::new(CleanProfile {
            pixel_id: profile.pixel_id.clone(),
            plot_id: profile.plot_id.clone(),
            bands: smoothed,
            ndvi,
            spatial: profile.spatial,
        })),
        stats,
    ))
}
