//! False Colour Composite chips for offline human review: NIR→red,
//! RED→green, GREEN→blue, with a per-channel 2–98 percentile stretch and
//! nearest-neighbor upsampling. Vegetation renders red.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Band;
use crate::preprocess::CleanProfile;

/// An 8-bit RGB chip, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FccChip {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[u8; 3]>,
}

/// Linear-interpolated percentile of pre-sorted values.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (p / 100.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Stretch one value into [0, 255] over the [lo, hi] window; degenerate
/// windows (constant band) map everything to mid-gray 127.
fn stretch(v: f64, lo: f64, hi: f64) -> u8 {
    if hi - lo <= f64::EPSILON {
        return 127;
    }
    (((v - lo) / (hi - lo) * 255.0).round()).clamp(0.0, 255.0) as u8
}

fn stretch_window(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (percentile_sorted(&sorted, 2.0), percentile_sorted(&sorted, 98.0))
}

/// Render one plot's retained pixels at timestep `t` into an FCC chip of
/// `out_size` × `out_size`. Every profile must carry a spatial (row, col);
/// cells with no pixel render black.
pub fn render_fcc_chip(profiles: &[&CleanProfile], t: usize, out_size: u32) -> Result<FccChip> {
    if profiles.is_empty() {
        return Err(Error::Invalid("no pixels to render".into()));
    }
    if out_size == 0 {
        return Err(Error::Config("output size must be positive".into()));
    }
    let mut placed = Vec::with_capacity(profiles.len());
    for p in profiles {
        if t >= p.ndvi.len() {
            return Err(Error::Invalid(format!(
                "timestep {t} outside grid of {} steps",
                p.ndvi.len()
            )));
        }
        match p.spatial {
            Some(rc) => placed.push((rc, *p)),
            None => {
                return Err(Error::Invalid(format!(
                    "pixel {} has no spatial layout; add row,col columns to the pixel file \
                     (or use pixel ids ending in _row_col) to enable FCC export",
                    p.pixel_id
                )))
            }
        }
    }

    let min_r = placed.iter().map(|((r, _), _)| *r).min().unwrap();
    let max_r = placed.iter().map(|((r, _), _)| *r).max().unwrap();
    let min_c = placed.iter().map(|((_, c), _)| *c).min().unwrap();
    let max_c = placed.iter().map(|((_, c), _)| *c).max().unwrap();
    let h = (max_r - min_r + 1) as usize;
    let w = (max_c - min_c + 1) as usize;

    // Channel sources per the standard FCC mapping.
    let channel_bands = [Band::Nir, Band::Red, Band::Green];
    let mut windows = [(0.0, 0.0); 3];
    for (ch, band) in channel_bands.iter().enumerate() {
        let values: Vec<f64> = placed.iter().map(|(_, p)| p.bands[*band][t]).collect();
        windows[ch] = stretch_window(&values);
    }

    let mut base = vec![[0u8; 3]; h * w];
    for ((r, c), p) in &placed {
        let idx = (r - min_r) as usize * w + (c - min_c) as usize;
        for (ch, band) in channel_bands.iter().enumerate() {
            let (lo, hi) = windows[ch];
            base[idx][ch] = stretch(p.bands[*band][t], lo, hi);
        }
    }

    // Nearest-neighbor upsample to the requested square size.
    let out = out_size as usize;
    let mut pixels = vec![[0u8; 3]; out * out];
    for y in 0..out {
        let sy = y * h / out;
        for x in 0..out {
            let sx = x * w / out;
            pixels[y * out + x] = base[sy * w + sx];
        }
    }
    Ok(FccChip { width: out_size, height: out_size, pixels })
}

/// Write a chip as an 8-bit RGB PNG.
pub fn write_png(chip: &FccChip, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), chip.width, chip.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Invalid(format!("png encoding failed: {e}")))?;
    let flat: Vec<u8> = chip.pixels.iter().flatten().copied().collect();
    writer
        .write_image_data(&flat)
        .map_err(|e| Error::Invalid(format!("png encoding failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BandGrid;

    fn profile_at(r: u32, c: u32, nir: f64, red: f64, green: f64) -> CleanProfile {
        let mut bands = BandGrid(std::array::from_fn(|_| vec![0.1; 2]));
        bands[Band::Nir] = vec![nir; 2];
        bands[Band::Red] = vec![red; 2];
        bands[Band::Green] = vec![green; 2];
        CleanProfile {
            pixel_id: format!("px_{r}_{c}"),
            plot_id: "p1".into(),
            bands,
            ndvi: vec![0.5; 2],
            spatial: Some((r, c)),
        }
    }

    #[test]
    fn constant_bands_render_mid_gray() {
        let a = profile_at(0, 0, 0.5, 0.1, 0.1);
        let b = profile_at(0, 1, 0.5, 0.1, 0.1);
        let chip = render_fcc_chip(&[&a, &b], 0, 2).unwrap();
        for px in &chip.pixels {
            assert_eq!(*px, [127, 127, 127]);
        }
    }

    #[test]
    fn vegetated_pixel_red_exceeds_green_channel() {
        // High NIR, low RED at one pixel vs an inverse pixel: the vegetated
        // one must come out redder than green.
        let veg = profile_at(0, 0, 0.6, 0.05, 0.08);
        let bare = profile_at(0, 1, 0.2, 0.3, 0.25);
        let chip = render_fcc_chip(&[&veg, &bare], 0, 2).unwrap();
        let veg_px = chip.pixels[0];
        assert!(veg_px[0] > veg_px[1], "red {} should exceed green {}", veg_px[0], veg_px[1]);
    }

    #[test]
    fn two_by_two_stretch_hits_extremes() {
        // NIR values {0.1, 0.2, 0.3, 0.9}: after the 2–98% stretch the min
        // maps to 0 and the max to 255 (window is [0.106, 0.864]).
        let profiles = [
            profile_at(0, 0, 0.1, 0.2, 0.2),
            profile_at(0, 1, 0.2, 0.2, 0.2),
            profile_at(1, 0, 0.3, 0.2, 0.2),
            profile_at(1, 1, 0.9, 0.2, 0.2),
        ];
        let refs: Vec<&CleanProfile> = profiles.iter().collect();
        let chip = render_fcc_chip(&refs, 0, 2).unwrap();
        assert_eq!(chip.pixels[0][0], 0);
        assert_eq!(chip.pixels[3][0], 255);
    }

    #[test]
    fn missing_spatial_layout_is_advised() {
        let mut p = profile_at(0, 0, 0.5, 0.1, 0.1);
        p.spatial = None;
        let err = render_fcc_chip(&[&p], 0, 2).unwrap_err();
        assert!(err.to_string().contains("row,col"), "{err}");
    }

    #[test]
    fn upsampling_is_nearest_neighbor() {
        let a = profile_at(0, 0, 0.9, 0.1, 0.1);
        let b = profile_at(0, 1, 0.1, 0.9, 0.9);
        let chip = render_fcc_chip(&[&a, &b], 0, 4).unwrap();
        // Left half repeats pixel a, right half pixel b.
        assert_eq!(chip.pixels[0], chip.pixels[1]);
        assert_eq!(chip.pixels[2], chip.pixels[3]);
        assert_ne!(chip.pixels[0], chip.pixels[2]);
    }
}
