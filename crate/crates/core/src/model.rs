//! Domain types shared by every stage: crop labels, the season time grid,
//! pixel profiles, plot records, mask layers, and the elimination audit trail.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Ring};

/// The five spectral bands every profile carries, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    Red,
    Green,
    Blue,
    Nir,
    Swir2,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::Red, Band::Green, Band::Blue, Band::Nir, Band::Swir2];

    pub fn index(self) -> usize {
        match self {
            Band::Red => 0,
            Band::Green => 1,
            Band::Blue => 2,
            Band::Nir => 3,
            Band::Swir2 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Red => "RED",
            Band::Green => "GREEN",
            Band::Blue => "BLUE",
            Band::Nir => "NIR",
            Band::Swir2 => "SWIR2",
        }
    }
}

/// A crop label: either a member of the run-configured crop list or one of
/// the sentinels. Sentinels never appear as classifier training targets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CropLabel {
    Crop(String),
    NonAg,
    Unknown,
}

impl CropLabel {
    pub fn as_str(&self) -> &str {
        match self {
            CropLabel::Crop(name) => name,
            CropLabel::NonAg => "NON_AG",
            CropLabel::Unknown => "UNKNOWN",
        }
    }

    pub fn is_crop(&self) -> bool {
        matches!(self, CropLabel::Crop(_))
    }
}

impl fmt::Display for CropLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The configured crop list. Label strings are mapped through this set at
/// ingest; anything unrecognized becomes [`CropLabel::Unknown`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSet {
    names: Vec<String>,
}

impl CropSet {
    pub fn new(names: &[&str]) -> Result<Self> {
        Self::from_names(names.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_names(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("crop list is empty".into()));
        }
        let mut seen = names.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != names.len() {
            return Err(Error::Config("crop list contains duplicates".into()));
        }
        if names.iter().any(|n| n == "NON_AG" || n == "UNKNOWN") {
            return Err(Error::Config("crop list may not contain sentinel labels".into()));
        }
        Ok(CropSet { names })
    }

    /// Map a raw label string to a crop label; unknown strings map to
    /// `Unknown` rather than erroring (vendor files contain stray labels).
    pub fn label(&self, raw: &str) -> CropLabel {
        match raw {
            "NON_AG" => CropLabel::NonAg,
            s if self.names.iter().any(|n| n == s) => CropLabel::Crop(s.to_string()),
            _ => CropLabel::Unknown,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Index of a crop name within the configured order.
    pub fn index_of(&self, label: &CropLabel) -> Option<usize> {
        match label {
            CropLabel::Crop(name) => self.names.iter().position(|n| n == name),
            _ => None,
        }
    }
}

/// The shared temporal axis every resampled profile in a run lives on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_day: i32,
    pub step_days: u32,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(start_day: i32, step_days: u32, n_steps: usize) -> Result<Self> {
        if step_days == 0 {
            return Err(Error::Config("time grid step must be positive".into()));
        }
        if n_steps < 2 {
            return Err(Error::Config("time grid needs at least 2 steps".into()));
        }
        Ok(TimeGrid { start_day, step_days, n_steps })
    }

    /// Day-of-season of grid step `i`.
    pub fn day(&self, i: usize) -> i32 {
        self.start_day + (i as i64 * self.step_days as i64) as i32
    }

    pub fn days(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.n_steps).map(|i| self.day(i))
    }

    pub fn last_day(&self) -> i32 {
        self.day(self.n_steps - 1)
    }

    /// Grid index whose day is nearest to `day` (ties toward the earlier step).
    pub fn nearest_step(&self, day: i32) -> usize {
        let mut best = 0usize;
        let mut best_dist = i64::MAX;
        for i in 0..self.n_steps {
            let d = (self.day(i) as i64 - day as i64).abs();
            if d < best_dist {
                best_dist = d;
                best = i;
            }
        }
        best
    }
}

impl Default for TimeGrid {
    /// Rabi season at 10-day cadence: days 0..180 inclusive, 19 steps.
    fn default() -> Self {
        TimeGrid { start_day: 0, step_days: 10, n_steps: 19 }
    }
}

/// One acquisition of one band: day-of-season, reflectance, and QA flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSample {
    pub day: i32,
    pub reflectance: f64,
    pub cloudy: bool,
}

/// 5 × n reflectance storage, one row per band in canonical order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandGrid(pub [Vec<f64>; 5]);

impl Index<Band> for BandGrid {
    type Output = Vec<f64>;
    fn index(&self, band: Band) -> &Vec<f64> {
        &self.0[band.index()]
    }
}

impl IndexMut<Band> for BandGrid {
    fn index_mut(&mut self, band: Band) -> &mut Vec<f64> {
        &mut self.0[band.index()]
    }
}

/// One pixel's raw multi-temporal observations across all five bands.
///
/// All bands share one strictly increasing day sequence and one per-day
/// cloud flag; `spatial` carries the optional (row, col) layout used only
/// by FCC chip rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelProfile {
    pub pixel_id: String,
    pub plot_id: String,
    pub days: Vec<i32>,
    pub cloudy: Vec<bool>,
    pub bands: BandGrid,
    pub spatial: Option<(u32, u32)>,
}

impl PixelProfile {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Number of samples not flagged cloudy.
    pub fn clear_count(&self) -> usize {
        self.cloudy.iter().filter(|c| !**c).count()
    }

    /// Per-band view of the sample sequence.
    pub fn samples(&self, band: Band) -> impl Iterator<Item = BandSample> + '_ {
        let values = &self.bands[band];
        self.days
            .iter()
            .zip(self.cloudy.iter())
            .zip(values.iter())
            .map(|((&day, &cloudy), &reflectance)| BandSample { day, reflectance, cloudy })
    }
}

/// One ground-truth polygon with its claimed label and member pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRecord {
    pub plot_id: String,
    pub polygon: Ring,
    pub claimed_label: CropLabel,
    pub district: String,
    pub season_year: i32,
    pub pixel_ids: Vec<String>,
}

/// Mask layer kinds a plot can collide with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    Road,
    Built,
    NonAg,
}

impl MaskKind {
    pub fn parse(s: &str) -> Option<MaskKind> {
        match s {
            "ROAD" => Some(MaskKind::Road),
            "BUILT" => Some(MaskKind::Built),
            "NON_AG" => Some(MaskKind::NonAg),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Road => "ROAD",
            MaskKind::Built => "BUILT",
            MaskKind::NonAg => "NON_AG",
        }
    }
}

/// One non-agricultural mask layer (roads, built structures, other).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLayer {
    pub kind: MaskKind,
    pub polygons: Vec<Ring>,
}

/// Pipeline stage an elimination happened at. `Ingest` and `Preprocess`
/// cover pre-L1 hygiene (unresolvable plots, too-sparse pixels) so the
/// audit trail reconciles exactly at every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Ingest,
    Preprocess,
    L1,
    L2,
    L3,
    Verify,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Ingest => "INGEST",
            Level::Preprocess => "PREPROCESS",
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
            Level::Verify => "VERIFY",
        }
    }
}

/// Closed reason-code set for eliminations, scoped per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    /// Plot resolved zero pixels at ingest.
    NoPixels,
    /// Pixel had too few clear samples to resample credibly.
    TooSparse,
    /// Claimed label not in the configured crop set.
    UnknownLabel,
    /// Plot overlaps a mask polygon beyond the threshold.
    MaskOverlap,
    /// Plot pair overlaps beyond the threshold (both eliminated).
    PlotOverlap,
    /// Pixel max NDVI below the vegetation floor.
    L2LowNdvi,
    /// Too few of the plot's pixels survived L2.
    L2PlotDecimated,
    /// Pixel sits in a low-variance cluster.
    L3Flat,
    /// Pixel sits in a high-roughness cluster.
    L3Noisy,
    /// Too few of the plot's pixels survived L3.
    L3PlotDecimated,
    /// Distance-vote verification flagged the claimed label.
    VerifyFlagged,
    /// Pixel removed because its parent plot was eliminated.
    PlotEliminated,
}

impl Reason {
    pub fn name(self) -> &'static str {
        match self {
            Reason::NoPixels => "NO_PIXELS",
            Reason::TooSparse => "TOO_SPARSE",
            Reason::UnknownLabel => "UNKNOWN_LABEL",
            Reason::MaskOverlap => "MASK_OVERLAP",
            Reason::PlotOverlap => "PLOT_OVERLAP",
            Reason::L2LowNdvi => "L2_LOW_NDVI",
            Reason::L2PlotDecimated => "L2_PLOT_DECIMATED",
            Reason::L3Flat => "L3_FLAT",
            Reason::L3Noisy => "L3_NOISY",
            Reason::L3PlotDecimated => "L3_PLOT_DECIMATED",
            Reason::VerifyFlagged => "VERIFY_FLAGGED",
            Reason::PlotEliminated => "PLOT_ELIMINATED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubjectKind {
    Plot,
    Pixel,
}

impl SubjectKind {
    pub fn name(self) -> &'static str {
        match self {
            SubjectKind::Plot => "plot",
            SubjectKind::Pixel => "pixel",
        }
    }
}

/// Audit-trail entry: exactly one per eliminated subject.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationRecord {
    pub subject_id: String,
    pub subject: SubjectKind,
    pub level: Level,
    pub reason: Reason,
    pub detail: String,
}

impl EliminationRecord {
    pub fn plot(id: &str, level: Level, reason: Reason, detail: impl Into<String>) -> Self {
        EliminationRecord {
            subject_id: id.to_string(),
            subject: SubjectKind::Plot,
            level,
            reason,
            detail: detail.into(),
        }
    }

    pub fn pixel(id: &str, level: Level, reason: Reason, detail: impl Into<String>) -> Self {
        EliminationRecord {
            subject_id: id.to_string(),
            subject: SubjectKind::Pixel,
            level,
            reason,
            detail: detail.into(),
        }
    }
}

/// A plot-invariant violation found by [`validate_plot`]. Violations are
/// data, not failures; callers decide what to do with them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlotViolation {
    DegeneratePolygon,
    SelfIntersecting,
    EmptyPixelSet,
}

impl fmt::Display for PlotViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlotViolation::DegeneratePolygon => f.write_str("degenerate polygon"),
            PlotViolation::SelfIntersecting => f.write_str("self-intersecting"),
            PlotViolation::EmptyPixelSet => f.write_str("empty pixel set"),
        }
    }
}

/// Check every plot invariant and return all violations found.
pub fn validate_plot(plot: &PlotRecord) -> Vec<PlotViolation> {
    let mut violations = Vec::new();
    if geometry::has_too_few_vertices(&plot.polygon) {
        violations.push(PlotViolation::DegeneratePolygon);
    } else if geometry::is_self_intersecting(&plot.polygon) {
        // Bowties also have zero shoelace area; report the sharper cause.
        violations.push(PlotViolation::SelfIntersecting);
    } else if geometry::is_degenerate(&plot.polygon) {
        violations.push(PlotViolation::DegeneratePolygon);
    }
    if plot.pixel_ids.is_empty() {
        violations.push(PlotViolation::EmptyPixelSet);
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot_with(polygon: Ring, pixel_ids: &[&str]) -> PlotRecord {
        PlotRecord {
            plot_id: "p1".into(),
            polygon,
            claimed_label: CropLabel::Crop("wheat".into()),
            district: "D1".into(),
            season_year: 2024,
            pixel_ids: pixel_ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn validate_accepts_unit_square_plot() {
        let plot = plot_with(
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            &["x1", "x2", "x3"],
        );
        assert!(validate_plot(&plot).is_empty());
    }

    #[test]
    fn validate_flags_two_vertex_ring() {
        let plot = plot_with(vec![(0.0, 0.0), (1.0, 1.0)], &["x1"]);
        assert_eq!(validate_plot(&plot), vec![PlotViolation::DegeneratePolygon]);
    }

    #[test]
    fn validate_flags_bowtie() {
        let plot = plot_with(vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)], &["x1"]);
        assert_eq!(validate_plot(&plot), vec![PlotViolation::SelfIntersecting]);
    }

    #[test]
    fn validate_reports_all_violations() {
        let plot = plot_with(vec![(0.0, 0.0), (1.0, 1.0)], &[]);
        let v = validate_plot(&plot);
        assert!(v.contains(&PlotViolation::DegeneratePolygon));
        assert!(v.contains(&PlotViolation::EmptyPixelSet));
    }

    #[test]
    fn crop_set_maps_unknown_strings_to_unknown() {
        let crops = CropSet::new(&["mustard", "paddy", "wheat"]).unwrap();
        assert_eq!(crops.label("wheat"), CropLabel::Crop("wheat".into()));
        assert_eq!(crops.label("sugarcane"), CropLabel::Unknown);
        assert_eq!(crops.label("NON_AG"), CropLabel::NonAg);
    }

    #[test]
    fn crop_set_rejects_sentinels_and_duplicates() {
        assert!(CropSet::new(&["wheat", "wheat"]).is_err());
        assert!(CropSet::new(&["wheat", "UNKNOWN"]).is_err());
        assert!(CropSet::new(&[]).is_err());
    }

    #[test]
    fn time_grid_default_covers_rabi_season() {
        let grid = TimeGrid::default();
        assert_eq!(grid.n_steps, 19);
        assert_eq!(grid.day(0), 0);
        assert_eq!(grid.last_day(), 180);
    }

    #[test]
    fn time_grid_rejects_degenerate_axes() {
        assert!(TimeGrid::new(0, 0, 19).is_err());
        assert!(TimeGrid::new(0, 10, 1).is_err());
    }

    #[test]
    fn nearest_step_picks_closest_day() {
        let grid = TimeGrid::default();
        assert_eq!(grid.nearest_step(0), 0);
        assert_eq!(grid.nearest_step(14), 1);
        assert_eq!(grid.nearest_step(500), 18);
    }
}
