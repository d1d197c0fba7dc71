//! Deterministic synthetic dataset generator reproducing the field-survey
//! error taxonomy at desk scale: double-logistic crop phenology rendered
//! into five bands, plus injected mislabels, non-agricultural plots,
//! perennial vegetation, boundary pixels, and clouds — with a truth table
//! so every downstream stage can be scored exactly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BandGrid, CropLabel, CropSet, MaskLayer, PixelProfile, PlotRecord, TimeGrid};

/// Double-logistic growth-curve parameters plus the per-band linear maps
/// that turn the curve into reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenologyParams {
    /// Off-season NDVI floor (v_b).
    pub base: f64,
    /// Seasonal amplitude (v_a).
    pub amplitude: f64,
    /// Green-up inflection day (S) and rate (m_S).
    pub greenup_day: f64,
    pub greenup_rate: f64,
    /// Senescence inflection day (A) and rate (m_A).
    pub senescence_day: f64,
    pub senescence_rate: f64,
    /// (gain, offset) per band in canonical order; reflectance =
    /// gain · v(t) + offset.
    pub band_maps: [(f64, f64); 5],
}

/// NIR and RED maps chosen so the derived NDVI reproduces the curve
/// exactly: nir = c(1+v), red = c(1−v) gives (nir−red)/(nir+red) = v.
/// Gains sit at the low end of real surface-reflectance ranges, so the
/// fixed sensor noise is a meaningful fraction of the class separation.
const NDVI_EXACT_MAPS: [(f64, f64); 5] = [
    (-0.20, 0.20),  // red
    (0.055, 0.055), // green
    (0.033, 0.033), // blue
    (0.20, 0.20),   // nir
    (-0.09, 0.20),  // swir2
];

/// Crop-specific green/blue/SWIR2 signatures on top of the shared
/// NDVI-exact NIR/RED pair: mustard canopies run bright in green, flooded
/// paddy drinks SWIR, wheat sits between.
fn crop_band_maps(green: (f64, f64), blue: (f64, f64), swir2: (f64, f64)) -> [(f64, f64); 5] {
    [(-0.20, 0.20), green, blue, (0.20, 0.20), swir2]
}

impl PhenologyParams {
    pub fn new(
        base: f64,
        amplitude: f64,
        greenup_day: f64,
        greenup_rate: f64,
        senescence_day: f64,
        senescence_rate: f64,
    ) -> Result<Self> {
        let p = PhenologyParams {
            base,
            amplitude,
            greenup_day,
            greenup_rate,
            senescence_day,
            senescence_rate,
            band_maps: NDVI_EXACT_MAPS,
        };
        p.validate_crop()?;
        Ok(p)
    }

    /// Crop-range validation: flat background curves (amplitude 0) are
    /// built with [`PhenologyParams::flat`] and skip these bounds.
    pub fn validate_crop(&self) -> Result<()> {
        if !(0.0..=0.3).contains(&self.base) {
            return Err(Error::Config(format!("phenology base {} outside [0, 0.3]", self.base)));
        }
        if !(0.2..=0.7).contains(&self.amplitude) {
            return Err(Error::Config(format!(
                "phenology amplitude {} outside [0.2, 0.7]",
                self.amplitude
            )));
        }
        if self.greenup_day >= self.senescence_day {
            return Err(Error::Config("green-up must precede senescence".into()));
        }
        self.validate_maps()
    }

    fn validate_maps(&self) -> Result<()> {
        for (gain, offset) in self.band_maps {
            for v in [0.0, 1.0] {
                let r = gain * v + offset;
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Config(format!(
                        "band map ({gain}, {offset}) leaves reflectance range at v={v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// A flat curve at `level` (non-agricultural ground, perennial cover).
    pub fn flat(level: f64) -> Self {
        PhenologyParams {
            base: level,
            amplitude: 0.0,
            greenup_day: 0.0,
            greenup_rate: 1.0,
            senescence_day: 1.0,
            senescence_rate: 1.0,
            band_maps: NDVI_EXACT_MAPS,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// v(t) = v_b + v_a · (σ(m_S·(t−S)) − σ(m_A·(t−A))) sampled on the grid.
pub fn phenology_curve(params: &PhenologyParams, grid: &TimeGrid) -> Vec<f64> {
    grid.days()
        .map(|day| {
            let t = day as f64;
            params.base
                + params.amplitude
                    * (logistic(params.greenup_rate * (t - params.greenup_day))
                        - logistic(params.senescence_rate * (t - params.senescence_day)))
        })
        .collect()
}

/// Injection rates for the error taxonomy. Plot-level corruptions are
/// drawn from disjoint subsets in the order non_ag, perennial, multi_crop,
/// mislabel; counts are deterministic (round(rate · n)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub mislabel_rate: f64,
    pub non_ag_rate: f64,
    pub perennial_rate: f64,
    pub boundary_pixel_rate: f64,
    pub cloud_rate: f64,
    pub multi_crop_polygon_rate: f64,
    pub reflectance_noise_sd: f64,
    /// Per-plot Gaussian jitter (in days) on the green-up and senescence
    /// inflections: fields of one crop share a curve family, not a single
    /// curve. This is what lets a mislabeled plot poison its feature-space
    /// neighborhood the way a mislabeled real field does.
    pub phenology_jitter_days: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::zero()
    }
}

impl NoiseSpec {
    /// Field-to-field variation the generator applies by default when a
    /// run does not choose its own value.
    pub const DEFAULT_JITTER_DAYS: f64 = 2.5;

    pub fn zero() -> Self {
        NoiseSpec {
            mislabel_rate: 0.0,
            non_ag_rate: 0.0,
            perennial_rate: 0.0,
            boundary_pixel_rate: 0.0,
            cloud_rate: 0.0,
            multi_crop_polygon_rate: 0.0,
            reflectance_noise_sd: 0.0,
            phenology_jitter_days: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("mislabel_rate", self.mislabel_rate),
            ("non_ag_rate", self.non_ag_rate),
            ("perennial_rate", self.perennial_rate),
            ("boundary_pixel_rate", self.boundary_pixel_rate),
            ("cloud_rate", self.cloud_rate),
            ("multi_crop_polygon_rate", self.multi_crop_polygon_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} = {rate} outside [0, 1]")));
            }
        }
        if self.reflectance_noise_sd < 0.0 {
            return Err(Error::Config("reflectance_noise_sd must be ≥ 0".into()));
        }
        if !(0.0..=30.0).contains(&self.phenology_jitter_days) {
            return Err(Error::Config("phenology_jitter_days must be in [0, 30]".into()));
        }
        Ok(())
    }
}

/// What a plot really is, regardless of its claimed label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrueCondition {
    Crop(String),
    NonAg,
    Perennial,
    MultiCrop,
}

impl TrueCondition {
    pub fn as_str(&self) -> &str {
        match self {
            TrueCondition::Crop(name) => name,
            TrueCondition::NonAg => "NON_AG",
            TrueCondition::Perennial => "PERENNIAL",
            TrueCondition::MultiCrop => "MULTI_CROP",
        }
    }

    pub fn parse(s: &str, crops: &CropSet) -> Result<TrueCondition> {
        match s {
            "NON_AG" => Ok(TrueCondition::NonAg),
            "PERENNIAL" => Ok(TrueCondition::Perennial),
            "MULTI_CROP" => Ok(TrueCondition::MultiCrop),
            name if crops.label(name).is_crop() => Ok(TrueCondition::Crop(name.to_string())),
            other => Err(Error::Parse(format!("unknown true condition {other:?}"))),
        }
    }
}

/// Everything the generator needs.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// (crop name, params) in configured order.
    pub crops: Vec<(String, PhenologyParams)>,
    pub n_plots_per_crop: usize,
    pub pixels_per_plot: usize,
    pub noise: NoiseSpec,
    pub grid: TimeGrid,
    pub seed: u64,
    pub districts: Vec<String>,
    pub season_year: i32,
    /// Flat curve levels for the two background conditions.
    pub non_ag_level: f64,
    pub perennial_level: f64,
}

impl SynthSpec {
    /// The three-crop Rabi instance. Curve shapes are deliberately close
    /// (green-up days one grid step apart): separable at plot scale, but
    /// confusable pixel by pixel once sensor noise and clouds land on top,
    /// which is what makes label quality matter for training.
    pub fn default_crops() -> Vec<(String, PhenologyParams)> {
        let mut mustard = PhenologyParams::new(0.12, 0.50, 32.0, 0.12, 106.0, 0.10).unwrap();
        mustard.band_maps = crop_band_maps((0.065, 0.060), (0.030, 0.028), (-0.075, 0.215));
        let mut paddy = PhenologyParams::new(0.12, 0.51, 45.0, 0.12, 119.0, 0.10).unwrap();
        paddy.band_maps = crop_band_maps((0.048, 0.046), (0.036, 0.032), (-0.13, 0.16));
        let mut wheat = PhenologyParams::new(0.12, 0.50, 58.0, 0.12, 132.0, 0.10).unwrap();
        wheat.band_maps = crop_band_maps((0.055, 0.050), (0.030, 0.026), (-0.085, 0.195));
        vec![
            ("mustard".to_string(), mustard),
            ("paddy".to_string(), paddy),
            ("wheat".to_string(), wheat),
        ]
    }

    pub fn new(n_plots_per_crop: usize, pixels_per_plot: usize, noise: NoiseSpec, seed: u64) -> Self {
        SynthSpec {
            crops: Self::default_crops(),
            n_plots_per_crop,
            pixels_per_plot,
            noise,
            grid: TimeGrid::default(),
            seed,
            districts: vec!["D1".to_string()],
            season_year: 2024,
            non_ag_level: 0.08,
            perennial_level: 0.60,
        }
    }

    pub fn crop_set(&self) -> Result<CropSet> {
        CropSet::from_names(self.crops.iter().map(|(n, _)| n.clone()).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.crops.is_empty() || self.n_plots_per_crop == 0 || self.pixels_per_plot == 0 {
            return Err(Error::Config("synth spec needs crops, plots, and pixels".into()));
        }
        if self.districts.is_empty() {
            return Err(Error::Config("synth spec needs at least one district".into()));
        }
        self.noise.validate()?;
        for (name, params) in &self.crops {
            params
                .validate_crop()
                .map_err(|e| Error::Config(format!("crop {name}: {e}")))?;
        }
        let n = self.crops.len() * self.n_plots_per_crop;
        let corrupted = rounded_count(self.noise.non_ag_rate, n)
            + rounded_count(self.noise.perennial_rate, n)
            + rounded_count(self.noise.multi_crop_polygon_rate, n)
            + rounded_count(self.noise.mislabel_rate, n);
        if corrupted > n {
            return Err(Error::Config(format!(
                "corruption rates select {corrupted} of {n} plots"
            )));
        }
        Ok(())
    }
}

/// The generated dataset plus its truth table.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub plots: Vec<PlotRecord>,
    pub pixels: Vec<PixelProfile>,
    pub masks: Vec<MaskLayer>,
    pub truth: Vec<(String, TrueCondition)>,
}

fn rounded_count(rate: f64, n: usize) -> usize {
    (rate * n as f64).round() as usize
}

// Field-variation scales applied per jitter day: vigor (amplitude), soil
// floor (base), growth-rate spread, and per-band soil-background offsets.
// Together with the two inflection shifts they give each plot an identity
// in a dozen feature dimensions rather than along a single curve axis.
// The non-temporal scales are deliberately the larger ones: they separate
// fields from each other without moving any field across the inter-crop
// phase gaps that the verification medians rely on.
// Sowing dates spread uniformly across a window (half-range per jitter
// day); maturity, vigor, soil floor, growth rates, and per-band soil
// backgrounds add smaller field-level texture on top.
// Vertical scales (vigor, soil) stay an order of magnitude below the
// timing scales: verification distances compare phase structure against
// per-crop medians, and large vertical spread would swamp that contrast.
const SOWING_SPAN_PER_JITTER_DAY: f64 = 1.4;
// Most fields sow inside the main window; a minority straddle a wider
// spread, thinly covering the between-window band.
const MAIN_WINDOW_PROB: f64 = 0.88;
const TAIL_SPAN_RATIO: f64 = 1.8;
const MATURITY_SD_PER_JITTER_DAY: f64 = 0.2;
const AMP_SD_PER_JITTER_DAY: f64 = 0.006;
const BASE_SD_PER_JITTER_DAY: f64 = 0.002;
const RATE_SD_PER_JITTER_DAY: f64 = 0.004;
const OFFSET_SD_PER_JITTER_DAY: f64 = 0.001;

/// Field surveys mislabel the out-of-window fields: a mislabeled plot's
/// season is drawn from the band between sowing windows, shifted toward
/// the crop it was mistaken for — sown late enough to sit outside its
/// crop's normal window, but still measurably nearer its own crop than
/// the claimed one. The band scales with the jitter knob and vanishes
/// with it, so zero-variation runs still produce textbook mislabels.
fn mislabel_bias_range(jitter_days: f64) -> (f64, f64) {
    let scale = (jitter_days / 2.0).clamp(0.0, 1.0);
    (0.26 * scale, 0.44 * scale)
}

/// Fisher-Yates shuffle driven by the generator's own rng stream.
fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

struct PlotPlan {
    plot_id: String,
    crop_index: usize,
    claimed_index: usize,
    condition: TrueCondition,
    district: String,
    cell: (usize, usize),
}

/// The crop a surveyor would mistake this one for: nearest green-up day,
/// ties toward the next crop in list order.
fn confusable_crop(crops: &[(String, PhenologyParams)], crop_index: usize) -> usize {
    let own = crops[crop_index].1.greenup_day;
    let mut best = usize::MAX;
    let mut best_gap = f64::INFINITY;
    for offset in 1..crops.len() {
        let candidate = (crop_index + offset) % crops.len();
        let gap = (crops[candidate].1.greenup_day - own).abs();
        if gap < best_gap {
            best_gap = gap;
            best = candidate;
        }
    }
    best
}

/// Generate the full dataset. Fully deterministic per seed: identical
/// specs produce byte-identical files.
pub fn generate_dataset(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let n_crops = spec.crops.len();
    let n_plots = n_crops * spec.n_plots_per_crop;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Corruption assignment: one shuffle, disjoint prefixes in fixed order.
    let order = shuffled_indices(n_plots, &mut rng);
    let n_non_ag = rounded_count(spec.noise.non_ag_rate, n_plots);
    let n_perennial = rounded_count(spec.noise.perennial_rate, n_plots);
    let n_multi = rounded_count(spec.noise.multi_crop_polygon_rate, n_plots);
    let n_mislabel = rounded_count(spec.noise.mislabel_rate, n_plots);
    let mut condition_of: Vec<Option<TrueCondition>> = vec![None; n_plots];
    let mut mislabeled: Vec<bool> = vec![false; n_plots];
    let mut cursor = 0usize;
    for &i in order.iter().skip(cursor).take(n_non_ag) {
        condition_of[i] = Some(TrueCondition::NonAg);
    }
    cursor += n_non_ag;
    for &i in order.iter().skip(cursor).take(n_perennial) {
        condition_of[i] = Some(TrueCondition::Perennial);
    }
    cursor += n_perennial;
    for &i in order.iter().skip(cursor).take(n_multi) {
        condition_of[i] = Some(TrueCondition::MultiCrop);
    }
    cursor += n_multi;
    for &i in order.iter().skip(cursor).take(n_mislabel) {
        mislabeled[i] = true;
    }

    // Plot plans: plots are laid out row-major on a non-overlapping grid
    // of squares, round-robin across districts.
    let grid_cols = (n_plots as f64).sqrt().ceil() as usize;
    let mut plans = Vec::with_capacity(n_plots);
    for plot_idx in 0..n_plots {
        let crop_index = plot_idx / spec.n_plots_per_crop;
        let crop_name = spec.crops[crop_index].0.clone();
        let condition = condition_of[plot_idx]
            .clone()
            .unwrap_or(TrueCondition::Crop(crop_name.clone()));
        // Mislabels go to the crop this one is most easily mistaken for.
        let claimed_index = if mislabeled[plot_idx] {
            confusable_crop(&spec.crops, crop_index)
        } else {
            crop_index
        };
        plans.push(PlotPlan {
            plot_id: format!("p{plot_idx:04}"),
            crop_index,
            claimed_index,
            condition,
            district: spec.districts[plot_idx % spec.districts.len()].clone(),
            cell: (plot_idx / grid_cols, plot_idx % grid_cols),
        });
    }

    // Reference background curves; crop curves are realized per plot.
    let non_ag_params = PhenologyParams::flat(spec.non_ag_level);
    let non_ag_curve = phenology_curve(&non_ag_params, &spec.grid);
    let perennial_curve = phenology_curve(&PhenologyParams::flat(spec.perennial_level), &spec.grid);
    let unit_normal =
        Normal::new(0.0, 1.0).map_err(|e| Error::Config(format!("bad jitter dist: {e}")))?;

    let cell_size = 0.01; // degrees between plot anchors
    let side = 0.006; // plot square side, leaves clear gaps
    let px_side = (spec.pixels_per_plot as f64).sqrt().ceil() as usize;
    let noise_dist = Normal::new(0.0, spec.noise.reflectance_noise_sd)
        .map_err(|e| Error::Config(format!("bad noise sd: {e}")))?;

    let mut plots = Vec::with_capacity(n_plots);
    let mut pixels = Vec::with_capacity(n_plots * spec.pixels_per_plot);
    let mut truth = Vec::with_capacity(n_plots);

    for plan in &plans {
        let (row, col) = plan.cell;
        let x0 = col as f64 * cell_size;
        let y0 = row as f64 * cell_size;
        let polygon = vec![(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)];

        // This plot's own realization of its crop: sowing-date shift on the
        // inflection days plus proportional vigor/soil variation, all
        // scaled by the one jitter knob. Multi-crop plots additionally get
        // an independent realization of the second source crop.
        let j = spec.noise.phenology_jitter_days;
        let other_index = (plan.crop_index + 1) % n_crops;
        let bias = if plan.claimed_index != plan.crop_index {
            // Mislabeled because it genuinely looked like the claimed
            // crop: the season shift lands in the ambiguity band.
            let (lo, hi) = mislabel_bias_range(j);
            Some((plan.claimed_index, lo + rng.random::<f64>() * (hi - lo)))
        } else {
            None
        };
        let mut realize = |crop_index: usize,
                           bias: Option<(usize, f64)>|
         -> (Vec<f64>, [(f64, f64); 5]) {
            let mut params = spec.crops[crop_index].1;
            // Season shift moves green-up and senescence together.
            let season_shift = match bias {
                Some((toward, frac)) => {
                    frac * (spec.crops[toward].1.greenup_day - params.greenup_day)
                }
                None => {
                    let span = SOWING_SPAN_PER_JITTER_DAY * j;
                    let width = if rng.random::<f64>() < MAIN_WINDOW_PROB {
                        span
                    } else {
                        span * TAIL_SPAN_RATIO
                    };
                    (2.0 * rng.random::<f64>() - 1.0) * width
                }
            };
            params.greenup_day += season_shift;
            params.senescence_day +=
                season_shift + MATURITY_SD_PER_JITTER_DAY * j * unit_normal.sample(&mut rng);
            params.amplitude += AMP_SD_PER_JITTER_DAY * j * unit_normal.sample(&mut rng);
            params.base += BASE_SD_PER_JITTER_DAY * j * unit_normal.sample(&mut rng);
            params.greenup_rate *= 1.0 + RATE_SD_PER_JITTER_DAY * j * unit_normal.sample(&mut rng);
            params.senescence_rate *=
                1.0 + RATE_SD_PER_JITTER_DAY * j * unit_normal.sample(&mut rng);
            let mut maps = params.band_maps;
            if let Some((toward, frac)) = bias {
                // The surveyor's confusion was also spectral: the field's
                // band signature leans toward the claimed crop's.
                for (map, target) in maps.iter_mut().zip(spec.crops[toward].1.band_maps) {
                    map.0 += frac * (target.0 - map.0);
                    map.1 += frac * (target.1 - map.1);
                }
            }
            for map in &mut maps {
                // Soil-background shift per band.
                map.1 += OFFSET_SD_PER_JITTER_DAY * j * unit_normal.sample(&mut rng);
            }
            (phenology_curve(&params, &spec.grid), maps)
        };
        let (primary_curve, primary_maps) = realize(plan.crop_index, bias);
        let (other_curve, other_maps) = realize(other_index, None);

        // Boundary pixels: a deterministic count per plot, positions drawn
        // from the generator stream.
        let n_boundary = rounded_count(spec.noise.boundary_pixel_rate, spec.pixels_per_plot);
        let boundary_set: Vec<usize> =
            shuffled_indices(spec.pixels_per_plot, &mut rng).into_iter().take(n_boundary).collect();

        let mut pixel_ids = Vec::with_capacity(spec.pixels_per_plot);
        for px in 0..spec.pixels_per_plot {
            let (pr, pc) = (px / px_side, px % px_side);
            let pixel_id = format!("{}_{pr}_{pc}", plan.plot_id);

            // Which curve and band maps feed this pixel.
            let (curve, maps): (&Vec<f64>, &[(f64, f64); 5]) = match &plan.condition {
                TrueCondition::NonAg => (&non_ag_curve, &non_ag_params.band_maps),
                TrueCondition::Perennial => (&perennial_curve, &non_ag_params.band_maps),
                TrueCondition::MultiCrop => {
                    // Half the pixels come from the next crop's curve.
                    if px < spec.pixels_per_plot / 2 {
                        (&primary_curve, &primary_maps)
                    } else {
                        (&other_curve, &other_maps)
                    }
                }
                TrueCondition::Crop(_) => (&primary_curve, &primary_maps),
            };
            let is_boundary = boundary_set.contains(&px)
                && matches!(plan.condition, TrueCondition::Crop(_) | TrueCondition::MultiCrop);

            let n_steps = spec.grid.n_steps;
            let mut days = Vec::with_capacity(n_steps);
            let mut cloudy_flags = Vec::with_capacity(n_steps);
            let mut bands = BandGrid::default();
            for (t, day) in spec.grid.days().enumerate() {
                days.push(day);
                cloudy_flags.push(rng.random::<f64>() < spec.noise.cloud_rate);
                for b in 0..5 {
                    let (gain, offset) = maps[b];
                    let mut value = gain * curve[t] + offset;
                    if is_boundary {
                        // Physical 50/50 mixed pixel: reflectance averages.
                        let (bg_gain, bg_offset) = non_ag_params.band_maps[b];
                        value = 0.5 * value + 0.5 * (bg_gain * non_ag_curve[t] + bg_offset);
                    }
                    value += noise_dist.sample(&mut rng);
                    bands.0[b].push(value.clamp(0.0, 1.0));
                }
            }
            pixels.push(PixelProfile {
                pixel_id: pixel_id.clone(),
                plot_id: plan.plot_id.clone(),
                days,
                cloudy: cloudy_flags,
                bands,
                spatial: Some((pr as u32, pc as u32)),
            });
            pixel_ids.push(pixel_id);
        }

        plots.push(PlotRecord {
            plot_id: plan.plot_id.clone(),
            polygon,
            claimed_label: CropLabel::Crop(spec.crops[plan.claimed_index].0.clone()),
            district: plan.district.clone(),
            season_year: spec.season_year,
            pixel_ids,
        });
        truth.push((plan.plot_id.clone(), plan.condition.clone()));
    }

    Ok(SynthOutput { plots, pixels, masks: Vec::new(), truth })
}

/// Uncorrupted plots per crop suitable as expert-verified seeds: the first
/// `per_crop` in id order whose truth matches their claimed label.
pub fn pick_seed_plots(output: &SynthOutput, per_crop: usize) -> Result<Vec<(String, String)>> {
    let mut seeds: Vec<(String, String)> = Vec::new();
    let claimed: std::collections::BTreeMap<&str, &CropLabel> =
        output.plots.iter().map(|p| (p.plot_id.as_str(), &p.claimed_label)).collect();
    let mut per_crop_count: std::collections::BTreeMap<&str, usize> = Default::default();
    for (plot_id, condition) in &output.truth {
        if let TrueCondition::Crop(name) = condition {
            if claimed.get(plot_id.as_str()).map(|l| l.as_str()) == Some(name.as_str()) {
                let count = per_crop_count.entry(name.as_str()).or_insert(0);
                if *count < per_crop {
                    seeds.push((plot_id.clone(), name.clone()));
                    *count += 1;
                }
            }
        }
    }
    let mut expected: Vec<&str> = output
        .truth
        .iter()
        .filter_map(|(_, c)| match c {
            TrueCondition::Crop(name) => Some(name.as_str()),
            _ => None,
        })
        .collect();
    expected.sort();
    expected.dedup();
    for crop in expected {
        let count = per_crop_count.get(crop).copied().unwrap_or(0);
        if count < per_crop {
            return Err(Error::Invalid(format!(
                "only {count} uncorrupted plots available as seeds for crop {crop}, need {per_crop}"
            )));
        }
    }
    Ok(seeds)
}

/// `plot_id,true_condition` rows, one per plot.
pub fn write_truth_csv<W: std::io::Write>(
    mut w: W,
    truth: &[(String, TrueCondition)],
) -> Result<()> {
    writeln!(w, "plot_id,true_condition")?;
    for (plot_id, condition) in truth {
        writeln!(w, "{plot_id},{}", condition.as_str())?;
    }
    Ok(())
}

pub fn parse_truth_csv(text: &str, crops: &CropSet) -> Result<Vec<(String, TrueCondition)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "plot_id,true_condition" {
                return Err(Error::Parse(format!("unexpected truth header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (plot_id, cond) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad truth row {}: {line:?}", i + 1)))?;
        out.push((plot_id.to_string(), TrueCondition::parse(cond.trim(), crops)?));
    }
    Ok(out)
}

/// `plot_id,verified_crop` rows — the expert seed-verification file.
pub fn write_seeds_csv<W: std::io::Write>(mut w: W, seeds: &[(String, String)]) -> Result<()> {
    writeln!(w, "plot_id,verified_crop")?;
    for (plot_id, crop) in seeds {
        writeln!(w, "{plot_id},{crop}")?;
    }
    Ok(())
}

pub fn parse_seeds_csv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "plot_id,verified_crop" {
                return Err(Error::Parse(format!("unexpected seeds header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (plot_id, crop) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad seeds row {}: {line:?}", i + 1)))?;
        out.push((plot_id.to_string(), crop.trim().to_string()));
    }
    Ok(out)
}

/// Write the full generated dataset in the exact ingest formats, plus the
/// truth table and optionally a seed-verification file.
pub fn write_dataset_files(
    dir: &std::path::Path,
    output: &SynthOutput,
    seeds_per_crop: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut plots = std::fs::File::create(dir.join("plots.geojson"))?;
    crate::ingest::write_plots_geojson(&mut plots, &output.plots)?;
    let mut pixels = std::fs::File::create(dir.join("pixels.csv"))?;
    crate::ingest::write_pixels_csv(&mut pixels, &output.pixels)?;
    let mut masks = std::fs::File::create(dir.join("masks.geojson"))?;
    crate::ingest::write_masks_geojson(&mut masks, &output.masks)?;
    let mut truth = std::fs::File::create(dir.join("truth.csv"))?;
    write_truth_csv(&mut truth, &output.truth)?;
    if seeds_per_crop > 0 {
        let seeds = pick_seed_plots(output, seeds_per_crop)?;
        let mut file = std::fs::File::create(dir.join("seeds.csv"))?;
        write_seeds_csv(&mut file, &seeds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_far_before_greenup_sits_at_base() {
        let p = PhenologyParams::new(0.15, 0.55, 90.0, 0.15, 160.0, 0.12).unwrap();
        let grid = TimeGrid::new(0, 1, 2).unwrap();
        let v = phenology_curve(&p, &grid);
        assert!((v[0] - 0.15).abs() < 1e-4, "got {}", v[0]);
    }

    #[test]
    fn curve_at_greenup_is_half_amplitude() {
        // With senescence far away the second logistic is ≈ 0 at t = S.
        let p = PhenologyParams::new(0.15, 0.55, 40.0, 0.15, 170.0, 0.30).unwrap();
        let grid = TimeGrid::new(40, 1, 2).unwrap();
        let v = phenology_curve(&p, &grid);
        assert!((v[0] - (0.15 + 0.55 / 2.0)).abs() < 1e-4, "got {}", v[0]);
    }

    #[test]
    fn curve_matches_closed_form_at_day_80() {
        // Independent evaluation of the closed form for the reference
        // parameter set, frozen as a regression constant.
        let p = PhenologyParams::new(0.15, 0.55, 40.0, 0.15, 120.0, 0.12).unwrap();
        let grid = TimeGrid::new(80, 1, 2).unwrap();
        let v = phenology_curve(&p, &grid);
        assert!((v[0] - 0.6941506431382).abs() < 1e-9, "got {:.13}", v[0]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec::new(4, 5, NoiseSpec::zero(), 7);
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.plots, b.plots);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn zero_noise_pixels_of_same_crop_identical() {
        let spec = SynthSpec::new(2, 3, NoiseSpec::zero(), 11);
        let out = generate_dataset(&spec).unwrap();
        // First two plots belong to crop 0; all their pixels share bands.
        let first = &out.pixels[0];
        for px in &out.pixels[1..2 * 3] {
            if px.plot_id.starts_with("p000") {
                assert_eq!(px.bands, first.bands);
            }
        }
    }

    #[test]
    fn corruption_counts_match_rates_exactly() {
        let noise = NoiseSpec {
            mislabel_rate: 0.25,
            non_ag_rate: 0.10,
            perennial_rate: 0.05,
            multi_crop_polygon_rate: 0.05,
            ..NoiseSpec::zero()
        };
        let spec = SynthSpec::new(20, 2, noise, 3); // 60 plots
        let out = generate_dataset(&spec).unwrap();
        let count = |cond: &TrueCondition| out.truth.iter().filter(|(_, c)| c == cond).count();
        assert_eq!(count(&TrueCondition::NonAg), 6);
        assert_eq!(count(&TrueCondition::Perennial), 3);
        assert_eq!(count(&TrueCondition::MultiCrop), 3);
        // Mislabels keep a crop condition but claimed != truth.
        let claimed: std::collections::BTreeMap<&str, &str> =
            out.plots.iter().map(|p| (p.plot_id.as_str(), p.claimed_label.as_str())).collect();
        let mislabeled = out
            .truth
            .iter()
            .filter(|(id, c)| {
                matches!(c, TrueCondition::Crop(name) if claimed[id.as_str()] != name)
            })
            .count();
        assert_eq!(mislabeled, 15);
    }

    #[test]
    fn truth_partitions_all_plots() {
        let spec = SynthSpec::new(5, 2, NoiseSpec::zero(), 1);
        let out = generate_dataset(&spec).unwrap();
        assert_eq!(out.truth.len(), out.plots.len());
        let mut ids: Vec<&str> = out.truth.iter().map(|(id, _)| id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), out.plots.len());
    }

    #[test]
    fn plots_do_not_overlap() {
        use crate::geometry::overlap_fraction;
        let spec = SynthSpec::new(3, 2, NoiseSpec::zero(), 9);
        let out = generate_dataset(&spec).unwrap();
        for a in &out.plots {
            for b in &out.plots {
                if a.plot_id != b.plot_id {
                    assert_eq!(overlap_fraction(&a.polygon, &b.polygon, 64).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_plots_is_error() {
        let spec = SynthSpec::new(0, 5, NoiseSpec::zero(), 7);
        assert!(generate_dataset(&spec).is_err());
    }

    #[test]
    fn non_ag_pixels_stay_below_vegetation_floor() {
        let mut noise = NoiseSpec::zero();
        noise.non_ag_rate = 1.0;
        let spec = SynthSpec::new(3, 4, noise, 13);
        let out = generate_dataset(&spec).unwrap();
        for px in &out.pixels {
            for t in 0..px.days.len() {
                let nir = px.bands.0[3][t];
                let red = px.bands.0[0][t];
                let ndvi = (nir - red) / (nir + red);
                assert!(ndvi < 0.4, "non-ag NDVI {ndvi} at or above the L2 floor");
            }
        }
    }

    #[test]
    fn seed_plots_skip_corrupted_plots() {
        let mut noise = NoiseSpec::zero();
        noise.mislabel_rate = 0.5;
        let spec = SynthSpec::new(10, 2, noise, 21);
        let out = generate_dataset(&spec).unwrap();
        let seeds = pick_seed_plots(&out, 3).unwrap();
        assert_eq!(seeds.len(), 9);
        let claimed: std::collections::BTreeMap<&str, &str> =
            out.plots.iter().map(|p| (p.plot_id.as_str(), p.claimed_label.as_str())).collect();
        for (plot_id, crop) in &seeds {
            assert_eq!(claimed[plot_id.as_str()], crop.as_str());
        }
    }
}
