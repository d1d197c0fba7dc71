//! Confusion-matrix evaluation: per-crop precision, recall (TPR), and F1,
//! with integer percentages for reports and full precision inside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CropLabel, CropSet};

/// Training-data level a report row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalLevel {
    Unclean,
    L1,
    L2,
    L3,
}

impl EvalLevel {
    pub const ALL: [EvalLevel; 4] = [EvalLevel::Unclean, EvalLevel::L1, EvalLevel::L2, EvalLevel::L3];

    pub fn name(self) -> &'static str {
        match self {
            EvalLevel::Unclean => "UNCLEAN",
            EvalLevel::L1 => "L1",
            EvalLevel::L2 => "L2",
            EvalLevel::L3 => "L3",
        }
    }

    pub fn parse(s: &str) -> Option<EvalLevel> {
        match s {
            "UNCLEAN" => Some(EvalLevel::Unclean),
            "L1" => Some(EvalLevel::L1),
            "L2" => Some(EvalLevel::L2),
            "L3" => Some(EvalLevel::L3),
            _ => None,
        }
    }
}

/// Full-precision metrics for one crop (fractions in [0, 1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropMetrics {
    pub crop: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: EvalLevel,
    pub crops: Vec<String>,
    /// counts[t][p] = rows with true class t predicted as p.
    pub confusion: Vec<Vec<usize>>,
    pub per_crop: Vec<CropMetrics>,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Round a fraction to an integer percentage, half-up.
pub fn percent(fraction: f64) -> u32 {
    (fraction * 100.0).round() as u32
}

/// Evaluate predictions against true labels over the configured crop set.
pub fn evaluate(
    predicted: &[CropLabel],
    truth: &[CropLabel],
    crops: &CropSet,
    level: EvalLevel,
) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "prediction/truth length mismatch: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let n = crops.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (p, t) in predicted.iter().zip(truth.iter()) {
        let ti = crops
            .index_of(t)
            .ok_or_else(|| Error::Invalid(format!("true label {t} not in crop set")))?;
        let pi = crops
            .index_of(p)
            .ok_or_else(|| Error::Invalid(format!("predicted label {p} not in crop set")))?;
        confusion[ti][pi] += 1;
    }

    let per_crop = crops
        .names()
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let tp = confusion[i][i];
            let support: usize = confusion[i].iter().sum();
            let predicted_i: usize = confusion.iter().map(|row| row[i]).sum();
            let precision = if predicted_i == 0 { 0.0 } else { tp as f64 / predicted_i as f64 };
            let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            CropMetrics {
                crop: name.clone(),
                support,
                precision,
                recall,
                f1: f1_score(precision, recall),
            }
        })
        .collect();

    Ok(EvalReport { level, crops: crops.names().to_vec(), confusion, per_crop })
}

impl EvalReport {
    /// Unweighted mean of per-crop F1 (fraction).
    pub fn macro_f1(&self) -> f64 {
        if self.per_crop.is_empty() {
            return 0.0;
        }
        self.per_crop.iter().map(|m| m.f1).sum::<f64>() / self.per_crop.len() as f64
    }

    pub fn total_rows(&self) -> usize {
        self.confusion.iter().map(|row| row.iter().sum::<usize>()).sum()
    }
}
