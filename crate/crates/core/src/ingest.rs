//! Parsing and cross-validation of the three input files (plots GeoJSON,
//! pixel CSV, masks GeoJSON) into a referentially consistent [`Dataset`].
//!
//! This module owns the file formats: the writers used by the synthetic
//! generator live here too, so round-trip tests have one source of truth.

use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{self, Ring};
use crate::model::{
    BandGrid, CropSet, EliminationRecord, Level, MaskKind, MaskLayer, PixelProfile, PlotRecord,
    Reason, TimeGrid,
};

/// Fully joined input: every plot's pixel ids resolve, every pixel's plot
/// id resolves, ids unique.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub plots: BTreeMap<String, PlotRecord>,
    pub pixels: BTreeMap<String, PixelProfile>,
    pub masks: Vec<MaskLayer>,
    pub grid: TimeGrid,
}

impl Dataset {
    /// Distinct acquisition days across all pixels (the run-wide
    /// acquisition count used by the preprocess sparsity gate).
    pub fn observable_days(&self) -> usize {
        let mut days: Vec<i32> = self.pixels.values().flat_map(|p| p.days.iter().copied()).collect();
        days.sort_unstable();
        days.dedup();
        days.len()
    }
}

fn ring_from_coordinates(coords: &Value, what: &str) -> Result<Ring> {
    let outer = coords
        .get(0)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Parse(format!("{what}: polygon has no outer ring")))?;
    let mut ring = Vec::with_capacity(outer.len());
    for pt in outer {
        let pair = pt
            .as_array()
            .filter(|a| a.len() >= 2)
            .ok_or_else(|| Error::Parse(format!("{what}: bad coordinate pair")))?;
        let lon = pair[0].as_f64().ok_or_else(|| Error::Parse(format!("{what}: non-numeric lon")))?;
        let lat = pair[1].as_f64().ok_or_else(|| Error::Parse(format!("{what}: non-numeric lat")))?;
        ring.push((lon, lat));
    }
    // GeoJSON rings close explicitly; store the open form.
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    if geometry::has_too_few_vertices(&ring) {
        return Err(Error::Parse(format!("{what}: degenerate polygon ring")));
    }
    if geometry::is_self_intersecting(&ring) {
        return Err(Error::Parse(format!("{what}: self-intersecting polygon ring")));
    }
    if geometry::is_degenerate(&ring) {
        return Err(Error::Parse(format!("{what}: degenerate polygon ring")));
    }
    Ok(ring)
}

fn feature_polygon(feature: &Value, what: &str) -> Result<Ring> {
    let geom = feature
        .get("geometry")
        .ok_or_else(|| Error::Parse(format!("{what}: missing geometry")))?;
    let gtype = geom.get("type").and_then(|t| t.as_str()).unwrap_or("");
    if gtype != "Polygon" {
        return Err(Error::Parse(format!("{what}: geometry type {gtype:?}, expected Polygon")));
    }
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| Error::Parse(format!("{what}: missing coordinates")))?;
    ring_from_coordinates(coords, what)
}

/// Parse the plots GeoJSON FeatureCollection. Unknown crop strings map to
/// `UNKNOWN`; duplicate plot ids and malformed features are errors.
pub fn parse_plots(text: &str, crops: &CropSet) -> Result<Vec<PlotRecord>> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("plots file is not valid JSON: {e}")))?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::Parse("plots file has no features array".into()))?;

    let mut plots = Vec::with_capacity(features.len());
    let mut seen_ids: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, feature) in features.iter().enumerate() {
        let props = feature
            .get("properties")
            .ok_or_else(|| Error::Parse(format!("plots feature {idx}: missing properties")))?;
        let plot_id = props
            .get("plot_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse(format!("plots feature {idx}: missing plot_id")))?
            .to_string();
        let what = format!("plots feature {idx} ({plot_id})");
        let crop_raw = props
            .get("crop")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse(format!("{what}: missing crop property")))?;
        let district = props
            .get("district")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse(format!("{what}: missing district property")))?
            .to_string();
        let season_year = props
            .get("season_year")
            .and_then(|v| v.as_i64())
            .ok_or_else(|| Error::Parse(format!("{what}: missing season_year property")))?
            as i32;
        if let Some(prev) = seen_ids.insert(plot_id.clone(), idx) {
            return Err(Error::Parse(format!(
                "duplicate plot_id {plot_id:?} in features {prev} and {idx}"
            )));
        }
        let polygon = feature_polygon(feature, &what)?;
        plots.push(PlotRecord {
            plot_id,
            polygon,
            claimed_label: crops.label(crop_raw),
            district,
            season_year,
            pixel_ids: Vec::new(),
        });
    }
    Ok(plots)
}

/// Parse the masks GeoJSON; polygons are grouped into one layer per kind.
pub fn parse_masks(text: &str) -> Result<Vec<MaskLayer>> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("masks file is not valid JSON: {e}")))?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::Parse("masks file has no features array".into()))?;

    let mut by_kind: BTreeMap<&'static str, Vec<Ring>> = BTreeMap::new();
    for (idx, feature) in features.iter().enumerate() {
        let what = format!("masks feature {idx}");
        let kind_raw = feature
            .get("properties")
            .and_then(|p| p.get("kind"))
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse(format!("{what}: missing kind property")))?;
        let kind = MaskKind::parse(kind_raw)
            .ok_or_else(|| Error::Parse(format!("{what}: unknown mask kind {kind_raw:?}")))?;
        let ring = feature_polygon(feature, &what)?;
        by_kind.entry(kind.name()).or_default().push(ring);
    }
    Ok(by_kind
        .into_iter()
        .map(|(name, polygons)| MaskLayer { kind: MaskKind::parse(name).unwrap(), polygons })
        .collect())
}

/// Spatial layout from a pixel id of the form `<anything>_<row>_<col>`.
fn spatial_from_id(pixel_id: &str) -> Option<(u32, u32)> {
    let parts: Vec<&str> = pixel_id.split('_').collect();
    if parts.len() < 3 {
        return None;
    }
    let row = parts[parts.len() - 2].parse().ok()?;
    let col = parts[parts.len() - 1].parse().ok()?;
    Some((row, col))
}

struct PixelBuilder {
    plot_id: String,
    first_row: usize,
    samples: Vec<(i32, [f64; 5], bool)>,
    spatial: Option<(u32, u32)>,
}

/// Parse the pixel CSV (`pixel_id,plot_id,day,red,green,blue,nir,swir2,cloudy`
/// plus optional `row,col`) into per-pixel profiles with days sorted
/// ascending. Row numbers in errors are 1-based file lines.
pub fn parse_pixel_series(text: &str) -> Result<Vec<PixelProfile>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let required = ["pixel_id", "plot_id", "day", "red", "green", "blue", "nir", "swir2", "cloudy"];
    let mut cols = [0usize; 9];
    for (i, name) in required.iter().enumerate() {
        cols[i] = col(name)
            .ok_or_else(|| Error::Parse(format!("pixel file missing column {name:?}")))?;
    }
    let row_col = col("row").zip(col("col"));

    let mut pixels: BTreeMap<String, PixelBuilder> = BTreeMap::new();
    for (rec_idx, record) in reader.records().enumerate() {
        let line = rec_idx + 2; // 1-based, after the header line
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();

        let pixel_id = field(cols[0]).to_string();
        let plot_id = field(cols[1]).to_string();
        if pixel_id.is_empty() || plot_id.is_empty() {
            return Err(Error::Parse(format!("empty pixel_id or plot_id, row {line}")));
        }
        let day: i32 = field(cols[2])
            .parse()
            .map_err(|_| Error::Parse(format!("non-integer day {:?}, row {line}", field(cols[2]))))?;
        if !(-366..=732).contains(&day) {
            return Err(Error::Parse(format!("day {day} outside season bounds, row {line}")));
        }
        let mut refl = [0.0f64; 5];
        for (b, &c) in cols[3..8].iter().enumerate() {
            let v: f64 = field(c).parse().map_err(|_| {
                Error::Parse(format!("non-numeric reflectance {:?}, row {line}", field(c)))
            })?;
            if !(0.0..=1.5).contains(&v) {
                return Err(Error::Parse(format!("reflectance out of range, row {line}")));
            }
            refl[b] = v;
        }
        let cloudy = match field(cols[8]) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse(format!("cloudy flag {other:?} not 0/1, row {line}")))
            }
        };
        let spatial = match row_col {
            Some((rc, cc)) => {
                let r: u32 = field(rc).parse().map_err(|_| {
                    Error::Parse(format!("non-integer row coordinate, row {line}"))
                })?;
                let c: u32 = field(cc).parse().map_err(|_| {
                    Error::Parse(format!("non-integer col coordinate, row {line}"))
                })?;
                Some((r, c))
            }
            None => spatial_from_id(&pixel_id),
        };

        let entry = pixels.entry(pixel_id.clone()).or_insert_with(|| PixelBuilder {
            plot_id: plot_id.clone(),
            first_row: line,
            samples: Vec::new(),
            spatial,
        });
        if entry.plot_id != plot_id {
            return Err(Error::Parse(format!(
                "pixel {pixel_id:?} maps to plots {:?} and {plot_id:?} (rows {} and {line})",
                entry.plot_id, entry.first_row
            )));
        }
        if entry.samples.iter().any(|(d, _, _)| *d == day) {
            return Err(Error::Parse(format!(
                "duplicate (pixel_id, day) = ({pixel_id:?}, {day}), row {line}"
            )));
        }
        entry.samples.push((day, refl, cloudy));
    }

    let mut out = Vec::with_capacity(pixels.len());
    for (pixel_id, mut builder) in pixels {
        builder.samples.sort_by_key(|(d, _, _)| *d);
        let mut bands = BandGrid::default();
        let mut days = Vec::with_capacity(builder.samples.len());
        let mut cloudy = Vec::with_capacity(builder.samples.len());
        for (day, refl, cl) in &builder.samples {
            days.push(*day);
            cloudy.push(*cl);
            for (b, v) in refl.iter().enumerate() {
                bands.0[b].push(*v);
            }
        }
        out.push(PixelProfile {
            pixel_id,
            plot_id: builder.plot_id,
            days,
            cloudy,
            bands,
            spatial: builder.spatial,
        });
    }
    Ok(out)
}

/// Join parsed components into a [`Dataset`], enforcing referential
/// integrity. Plots with zero resolvable pixels are eliminated with reason
/// `NO_PIXELS` (pre-L1 hygiene, reported separately).
pub fn join_and_check(
    plots: Vec<PlotRecord>,
    pixels: Vec<PixelProfile>,
    masks: Vec<MaskLayer>,
    grid: TimeGrid,
) -> Result<(Dataset, Vec<EliminationRecord>)> {
    let mut plot_map: BTreeMap<String, PlotRecord> = BTreeMap::new();
    for plot in plots {
        if plot_map.contains_key(&plot.plot_id) {
            return Err(Error::Integrity(format!("duplicate plot id {:?}", plot.plot_id)));
        }
        plot_map.insert(plot.plot_id.clone(), plot);
    }

    let mut pixel_map: BTreeMap<String, PixelProfile> = BTreeMap::new();
    for pixel in pixels {
        if pixel_map.contains_key(&pixel.pixel_id) {
            return Err(Error::Integrity(format!("duplicate pixel id {:?}", pixel.pixel_id)));
        }
        if !plot_map.contains_key(&pixel.plot_id) {
            return Err(Error::Integrity(format!(
                "pixel {:?} references nonexistent plot {:?}",
                pixel.pixel_id, pixel.plot_id
            )));
        }
        pixel_map.insert(pixel.pixel_id.clone(), pixel);
    }

    // Rebuild each plot's pixel list from the pixel file so both directions
    // of the join agree; a plot file may list pixels that never made it
    // into the extraction, which is tolerated.
    let mut by_plot: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for pixel in pixel_map.values() {
        by_plot.entry(pixel.plot_id.clone()).or_default().push(pixel.pixel_id.clone());
    }

    let mut eliminations = Vec::new();
    let mut joined: BTreeMap<String, PlotRecord> = BTreeMap::new();
    for (plot_id, mut plot) in plot_map {
        match by_plot.remove(&plot_id) {
            Some(mut ids) => {
                ids.sort();
                plot.pixel_ids = ids;
                joined.insert(plot_id, plot);
            }
            None => {
                eliminations.push(EliminationRecord::plot(
                    &plot_id,
                    Level::Ingest,
                    Reason::NoPixels,
                    "no pixel rows resolved for this plot",
                ));
            }
        }
    }

    Ok((Dataset { plots: joined, pixels: pixel_map, masks, grid }, eliminations))
}

/// Parse all three files and join them.
pub fn load_dataset(
    plots_text: &str,
    pixels_text: &str,
    masks_text: &str,
    crops: &CropSet,
    grid: TimeGrid,
) -> Result<(Dataset, Vec<EliminationRecord>)> {
    let plots = parse_plots(plots_text, crops)?;
    let pixels = parse_pixel_series(pixels_text)?;
    let masks = parse_masks(masks_text)?;
    join_and_check(plots, pixels, masks, grid)
}

fn ring_coordinates(ring: &Ring) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|(x, y)| json!([x, y])).collect();
    if let Some(first) = ring.first() {
        pts.push(json!([first.0, first.1]));
    }
    json!([pts])
}

/// Serialize plots in the exact format [`parse_plots`] reads.
pub fn write_plots_geojson<W: Write>(mut w: W, plots: &[PlotRecord]) -> Result<()> {
    let features: Vec<Value> = plots
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": ring_coordinates(&p.polygon)},
                "properties": {
                    "plot_id": p.plot_id,
                    "crop": p.claimed_label.as_str(),
                    "district": p.district,
                    "season_year": p.season_year,
                },
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Serialize masks in the exact format [`parse_masks`] reads.
pub fn write_masks_geojson<W: Write>(mut w: W, masks: &[MaskLayer]) -> Result<()> {
    let mut features = Vec::new();
    for layer in masks {
        for ring in &layer.polygons {
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": ring_coordinates(ring)},
                "properties": {"kind": layer.kind.name()},
            }));
        }
    }
    let doc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Serialize pixel profiles in the exact format [`parse_pixel_series`]
/// reads, one row per (pixel, day), days ascending within a pixel.
pub fn write_pixels_csv<W: Write>(mut w: W, pixels: &[PixelProfile]) -> Result<()> {
    let spatial = pixels.iter().any(|p| p.spatial.is_some());
    if spatial {
        writeln!(w, "pixel_id,plot_id,day,red,green,blue,nir,swir2,cloudy,row,col")?;
    } else {
        writeln!(w, "pixel_id,plot_id,day,red,green,blue,nir,swir2,cloudy")?;
    }
    for pixel in pixels {
        for (i, &day) in pixel.days.iter().enumerate() {
            let vals: Vec<String> =
                (0..5).map(|b| format!("{:.6}", pixel.bands.0[b][i])).collect();
            let cloudy = if pixel.cloudy[i] { 1 } else { 0 };
            if spatial {
                let (r, c) = pixel.spatial.unwrap_or((0, 0));
                writeln!(
                    w,
                    "{},{},{},{},{cloudy},{r},{c}",
                    pixel.pixel_id,
                    pixel.plot_id,
                    day,
                    vals.join(",")
                )?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{},{cloudy}",
                    pixel.pixel_id,
                    pixel.plot_id,
                    day,
                    vals.join(",")
                )?;
            }
        }
    }
    Ok(())
}
