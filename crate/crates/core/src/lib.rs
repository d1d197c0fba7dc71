//! Batch cleaning of manually collected crop ground-truth data over
//! multi-temporal 5-band satellite pixel profiles, plus a from-scratch
//! Random Forest to measure what the cleaning buys.
//!
//! The pipeline runs four successive elimination/verification levels:
//!
//! * L1 — geometric filters: unknown labels, mask overlap, plot-pair overlap
//! * L2 — NDVI-maximum threshold on per-pixel temporal profiles
//! * L3 — K-means clustering of NDVI profiles; flat and noisy clusters dropped
//! * VERIFY — median spectral-profile distance votes against expert seed plots
//!
//! A deterministic synthetic generator ([`synth`]) reproduces the field-survey
//! error taxonomy (mislabels, non-agricultural plots, perennial vegetation,
//! boundary pixels, clouds) at desk scale so every stage can be tested against
//! a known truth table.

pub mod classify;
pub mod cleaning;
pub mod config;
pub mod error;
pub mod fcc;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod seed;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
