//! Median spectral-profile verification: plot embeddings over the five
//! bands, per-crop coordinatewise medians from expert-verified seed plots,
//! and a 2-of-3 distance vote (cosine, Pearson, Manhattan) that CONFIRMS
//! or FLAGS each claimed label — never relabels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, CropLabel};
use crate::preprocess::CleanProfile;

/// Tie margin below which a metric abstains rather than guessing.
const TIE_EPS: f64 = 1e-12;

/// Per-plot embedding: band-wise mean over retained pixels, concatenated
/// in canonical band order (length 5 · n_steps).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub plot_id: String,
    pub vector: Vec<f64>,
}

/// Per-crop coordinatewise median over seed embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianProfile {
    pub crop: CropLabel,
    pub vector: Vec<f64>,
    pub support: usize,
}

/// The three distance metrics, computed in one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceScores {
    pub cosine_sim: f64,
    pub pearson_r: f64,
    pub manhattan: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Confirmed,
    Flagged,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Confirmed => "CONFIRMED",
            Decision::Flagged => "FLAGGED",
        }
    }
}

/// One metric's vote: the nearest crop, or an abstention on the metric's
/// error/tie cases.
pub type Vote = Option<CropLabel>;

/// Distance-vote verdict for one plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub plot_id: String,
    pub claimed: CropLabel,
    pub vote_cosine: Vote,
    pub vote_pearson: Vote,
    pub vote_manhattan: Vote,
    pub decision: Decision,
}

/// Mean the plot's retained pixels per band and timestep, concatenated in
/// fixed band order.
pub fn embed_plot(plot_id: &str, profiles: &[&CleanProfile]) -> Result<SpectralEmbedding> {
    if profiles.is_empty() {
        return Err(Error::Invalid(format!("plot {plot_id} has zero retained pixels")));
    }
    let n_steps = profiles[0].ndvi.len();
    let mut vector = Vec::with_capacity(5 * n_steps);
    for band in Band::ALL {
        for t in 0..n_steps {
            let sum: f64 = profiles.iter().map(|p| p.bands[band][t]).sum();
            vector.push(sum / profiles.len() as f64);
        }
    }
    Ok(SpectralEmbedding { plot_id: plot_id.to_string(), vector })
}

fn coordinatewise_median(vectors: &[&[f64]]) -> Vec<f64> {
    let dim = vectors[0].len();
    let n = vectors.len();
    let mut out = Vec::with_capacity(dim);
    let mut column = vec![0.0; n];
    for d in 0..dim {
        for (i, v) in vectors.iter().enumerate() {
            column[i] = v[d];
        }
        column.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            column[n / 2]
        } else {
            (column[n / 2 - 1] + column[n / 2]) / 2.0
        };
        out.push(median);
    }
    out
}

/// Build per-crop median profiles from verified seed embeddings. Every
/// crop must reach `min_seed_support` seeds.
pub fn build_median_profiles(
    seeds: &[(SpectralEmbedding, CropLabel)],
    min_seed_support: usize,
) -> Result<BTreeMap<CropLabel, MedianProfile>> {
    let mut by_crop: BTreeMap<CropLabel, Vec<&[f64]>> = BTreeMap::new();
    for (embedding, label) in seeds {
        if !label.is_crop() {
            return Err(Error::Invalid(format!(
                "seed plot {} carries non-crop label {label}",
                embedding.plot_id
            )));
        }
        by_crop.entry(label.clone()).or_default().push(&embedding.vector);
    }
    let mut out = BTreeMap::new();
    for (crop, vectors) in by_crop {
        if vectors.len() < min_seed_support {
            return Err(Error::Invalid(format!(
                "crop {crop} has {} verified seeds, needs {min_seed_support}",
                vectors.len()
            )));
        }
        let vector = coordinatewise_median(&vectors);
        out.insert(crop.clone(), MedianProfile { crop, vector, support: vectors.len() });
    }
    Ok(out)
}

/// Cosine similarity, Pearson correlation, and Manhattan distance between
/// two equal-length vectors. Cosine errors on zero-norm input; Pearson on
/// constant input.
pub fn distance_scores(a: &[f64], b: &[f64]) -> Result<DistanceScores> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Invalid(format!(
            "distance_scores needs equal lengths ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let cosine_sim = cosine(a, b)?;
    let am = mean(a);
    let bm = mean(b);
    let ac: Vec<f64> = a.iter().map(|v| v - am).collect();
    let bc: Vec<f64> = b.iter().map(|v| v - bm).collect();
    let pearson_r = cosine(&ac, &bc)
        .map_err(|_| Error::Invalid("pearson undefined for constant vector".into()))?;
    let manhattan = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum();
    Ok(DistanceScores { cosine_sim, pearson_r, manhattan })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("cosine undefined for zero-norm vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Pick the crop with the best score, abstaining on a tie within
/// [`TIE_EPS`]. `higher_is_better` selects the comparison direction.
fn vote_best(scores: &[(CropLabel, f64)], higher_is_better: bool) -> Vote {
    if scores.is_empty() {
        return None;
    }
    let mut sorted: Vec<&(CropLabel, f64)> = scores.iter().collect();
    sorted.sort_by(|x, y| {
        let ord = x.1.total_cmp(&y.1);
        if higher_is_better {
            ord.reverse()
        } else {
            ord
        }
    });
    if sorted.len() > 1 && (sorted[0].1 - sorted[1].1).abs() <= TIE_EPS {
        return None;
    }
    Some(sorted[0].0.clone())
}

/// Vote each metric for the nearest median and CONFIRM iff at least two
/// non-abstaining votes match the claimed label.
pub fn verify_plot(
    embedding: &SpectralEmbedding,
    medians: &BTreeMap<CropLabel, MedianProfile>,
    claimed: &CropLabel,
) -> Result<Verdict> {
    if medians.len() < 2 {
        return Err(Error::Invalid(format!(
            "verification needs ≥ 2 crop medians, got {}",
            medians.len()
        )));
    }
    let mut cosine_scores = Vec::new();
    let mut pearson_scores = Vec::new();
    let mut manhattan_scores = Vec::new();
    for (crop, median) in medians {
        if let Ok(cs) = cosine(&embedding.vector, &median.vector) {
            cosine_scores.push((crop.clone(), cs));
        }
        if let Ok(ds) = distance_scores(&embedding.vector, &median.vector) {
            pearson_scores.push((crop.clone(), ds.pearson_r));
        }
        let manhattan: f64 = embedding
            .vector
            .iter()
            .zip(median.vector.iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        manhattan_scores.push((crop.clone(), manhattan));
    }
    // A metric that errored against any median abstains entirely; partial
    // score lists would bias the argmax.
    let vote_cosine =
        if cosine_scores.len() == medians.len() { vote_best(&cosine_scores, true) } else { None };
    let vote_pearson =
        if pearson_scores.len() == medians.len() { vote_best(&pearson_scores, true) } else { None };
    let vote_manhattan = vote_best(&manhattan_scores, false);

    let votes_for_claim = [&vote_cosine, &vote_pearson, &vote_manhattan]
        .iter()
        .filter(|v| v.as_ref() == Some(claimed))
        .count();
    let decision = if votes_for_claim >= 2 { Decision::Confirmed } else { Decision::Flagged };

    Ok(Verdict {
        plot_id: embedding.plot_id.clone(),
        claimed: claimed.clone(),
        vote_cosine,
        vote_pearson,
        vote_manhattan,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BandGrid;

    fn crop(name: &str) -> CropLabel {
        CropLabel::Crop(name.into())
    }

    fn embedding(id: &str, vector: Vec<f64>) -> SpectralEmbedding {
        SpectralEmbedding { plot_id: id.into(), vector }
    }

    fn clean_with_bands(pixel: &str, value: f64, n: usize) -> CleanProfile {
        CleanProfile {
            pixel_id: pixel.into(),
            plot_id: "p1".into(),
            bands: BandGrid(std::array::from_fn(|_| vec![value; n])),
            ndvi: vec![0.5; n],
            spatial: None,
        }
    }

    #[test]
    fn embed_single_pixel_is_flattened_bands() {
        let p = clean_with_bands("a", 0.4, 3);
        let e = embed_plot("p1", &[&p]).unwrap();
        assert_eq!(e.vector, vec![0.4; 15]);
    }

    #[test]
    fn embed_two_pixels_is_mean() {
        let a = clean_with_bands("a", 0.2, 3);
        let b = clean_with_bands("b", 0.4, 3);
        let e = embed_plot("p1", &[&a, &b]).unwrap();
        for v in e.vector {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_zero_pixels_is_error() {
        assert!(embed_plot("p1", &[]).is_err());
    }

    #[test]
    fn median_odd_even_and_outlier() {
        let seeds: Vec<(SpectralEmbedding, CropLabel)> = [0.2, 0.4, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &v)| (embedding(&format!("s{i}"), vec![v, v]), crop("wheat")))
            .collect();
        let medians = build_median_profiles(&seeds, 3).unwrap();
        assert_eq!(medians[&crop("wheat")].vector, vec![0.4, 0.4]);

        let seeds: Vec<(SpectralEmbedding, CropLabel)> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &v)| (embedding(&format!("s{i}"), vec![v]), crop("wheat")))
            .collect();
        let medians = build_median_profiles(&seeds, 3).unwrap();
        assert!((medians[&crop("wheat")].vector[0] - 0.5).abs() < 1e-12);

        // Outlier shifts the median only to the next order statistic.
        let seeds: Vec<(SpectralEmbedding, CropLabel)> = [0.2, 0.4, 0.6, 0.8, 9.9]
            .iter()
            .enumerate()
            .map(|(i, &v)| (embedding(&format!("s{i}"), vec![v]), crop("wheat")))
            .collect();
        let medians = build_median_profiles(&seeds, 3).unwrap();
        assert!((medians[&crop("wheat")].vector[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn median_undersupported_crop_is_named() {
        let seeds = vec![(embedding("s0", vec![0.2]), crop("paddy"))];
        let err = build_median_profiles(&seeds, 5).unwrap_err();
        assert!(err.to_string().contains("paddy"), "{err}");
    }

    #[test]
    fn distance_identities() {
        let a = vec![0.3, 0.7, 0.1];
        let s = distance_scores(&a, &a).unwrap();
        assert!((s.cosine_sim - 1.0).abs() < 1e-12);
        assert!((s.pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(s.manhattan, 0.0);
    }

    #[test]
    fn distance_orthogonal_vectors() {
        let s = distance_scores(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(s.cosine_sim.abs() < 1e-12);
        assert_eq!(s.manhattan, 2.0);
    }

    #[test]
    fn distance_collinear_scale_invariance() {
        let s = distance_scores(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((s.cosine_sim - 1.0).abs() < 1e-12);
        assert_eq!(s.manhattan, 6.0);
    }

    #[test]
    fn distance_error_cases() {
        assert!(distance_scores(&[0.0, 0.0], &[1.0, 2.0]).is_err()); // zero norm
        assert!(distance_scores(&[1.0, 1.0], &[1.0, 2.0]).is_err()); // constant → pearson
        assert!(distance_scores(&[1.0], &[1.0]).is_err()); // too short
    }

    fn two_medians() -> BTreeMap<CropLabel, MedianProfile> {
        let mut medians = BTreeMap::new();
        medians.insert(
            crop("mustard"),
            MedianProfile { crop: crop("mustard"), vector: vec![0.1, 0.5, 0.9], support: 5 },
        );
        medians.insert(
            crop("wheat"),
            MedianProfile { crop: crop("wheat"), vector: vec![0.9, 0.5, 0.1], support: 5 },
        );
        medians
    }

    #[test]
    fn verify_confirms_matching_embedding() {
        let medians = two_medians();
        let e = embedding("p1", vec![0.1, 0.5, 0.9]);
        let v = verify_plot(&e, &medians, &crop("mustard")).unwrap();
        assert_eq!(v.decision, Decision::Confirmed);
        assert_eq!(v.vote_cosine, Some(crop("mustard")));
        assert_eq!(v.vote_pearson, Some(crop("mustard")));
        assert_eq!(v.vote_manhattan, Some(crop("mustard")));
    }

    #[test]
    fn verify_flags_wrong_claim() {
        let medians = two_medians();
        let e = embedding("p1", vec![0.9, 0.5, 0.1]); // equals the wheat median
        let v = verify_plot(&e, &medians, &crop("mustard")).unwrap();
        assert_eq!(v.decision, Decision::Flagged);
        assert_eq!(v.vote_cosine, Some(crop("wheat")));
    }

    #[test]
    fn verify_midpoint_ties_abstain_and_flag() {
        let medians = two_medians();
        // Exactly between the two medians on every coordinate.
        let e = embedding("p1", vec![0.5, 0.5, 0.5]);
        let v = verify_plot(&e, &medians, &crop("mustard")).unwrap();
        assert_eq!(v.vote_manhattan, None);
        // Cosine/pearson also tie by symmetry; pearson may abstain via the
        // constant-vector error, which is equally an abstention.
        assert_eq!(v.vote_cosine, None);
        assert_eq!(v.decision, Decision::Flagged);
    }

    #[test]
    fn verify_requires_two_medians() {
        let mut medians = two_medians();
        medians.remove(&crop("wheat"));
        let e = embedding("p1", vec![0.1, 0.5, 0.9]);
        assert!(verify_plot(&e, &medians, &crop("mustard")).is_err());
    }
}
