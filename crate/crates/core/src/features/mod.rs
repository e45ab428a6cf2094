//! The canonical 537-slot feature vector: spectral, temporal, complexity,
//! connectivity and wavelet descriptors per epoch or live window, plus the
//! z-scoring state fitted on training data.
//!
//! Slot layout is fixed by a [`FeatureManifest`] built from a
//! [`FeatureConfig`]; its content hash travels with every vector and model.

pub mod complexity;
pub mod config;
pub mod dwt;
mod extract;
mod io;
pub mod manifest;
pub mod spectral;
mod standardize;
pub mod time;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::spectral::SpectralError;
use crate::ingest::PainLabel;

pub use config::{BandName, FeatureConfig, FrequencyBand, Profile};
pub use extract::{extract_all, extract_features, FeatureExtractor};
pub use io::{read_feature_matrix, write_feature_matrix, FEATURE_FILE_MAGIC, FEATURE_FILE_VERSION};
pub use manifest::{FeatureManifest, SlotSpec};
pub use standardize::StandardizationState;

/// Length of every canonical feature vector.
pub const TOTAL_SLOTS: usize = 537;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("signal too short: need {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("too few Welch segments: need {needed}, got {got}")]
    TooFewSegments { needed: usize, got: usize },
    #[error("{band} band lies above Nyquist ({nyquist} Hz)")]
    BandAboveNyquist { band: String, nyquist: f64 },
    #[error("{band} band has {bins} frequency bins (need 3)")]
    TooFewBins { band: String, bins: usize },
    #[error("manifest mismatch: expected {expected}, got {got}")]
    ManifestMismatch { expected: String, got: String },
    #[error("standardization state has not been fitted")]
    NotFitted,
    #[error("expected {expected} slots, got {got}")]
    SlotCountMismatch { expected: usize, got: usize },
    #[error("feature config: {0}")]
    Config(String),
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<SpectralError> for FeatureError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::SignalTooShort { needed, got } => FeatureError::SignalTooShort { needed, got },
            SpectralError::TooFewSegments { needed, got } => FeatureError::TooFewSegments { needed, got },
            SpectralError::LengthMismatch(a, b) => FeatureError::SignalTooShort { needed: a.max(b), got: a.min(b) },
        }
    }
}

/// Bit set of conditions met while computing a vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureFlags(pub u32);

impl FeatureFlags {
    pub const TRUNCATED: u32 = 1 << 0;
    pub const GAMMA_CLIPPED: u32 = 1 << 1;
    pub const RATIO_FLOORED: u32 = 1 << 2;
    pub const ZERO_VARIANCE: u32 = 1 << 3;
    pub const SAMPEN_UNDEFINED: u32 = 1 << 4;
    pub const HIGUCHI_DEGENERATE: u32 = 1 << 5;
    pub const FLAT_PEAK: u32 = 1 << 6;
    pub const ZERO_PSD: u32 = 1 << 7;
    pub const PARTIAL_WINDOW: u32 = 1 << 8;
    pub const COHERENCE_UNAVAILABLE: u32 = 1 << 9;

    pub fn set(&mut self, bit: u32) {
        self.0 |= bit;
    }

    pub fn contains(self, bit: u32) -> bool {
        self.0 & bit != 0
    }

    pub fn names(self) -> Vec<&'static str> {
        const NAMES: [(u32, &str); 10] = [
            (FeatureFlags::TRUNCATED, "truncated"),
            (FeatureFlags::GAMMA_CLIPPED, "gamma_clipped"),
            (FeatureFlags::RATIO_FLOORED, "ratio_floored"),
            (FeatureFlags::ZERO_VARIANCE, "zero_variance"),
            (FeatureFlags::SAMPEN_UNDEFINED, "sampen_undefined"),
            (FeatureFlags::HIGUCHI_DEGENERATE, "higuchi_degenerate"),
            (FeatureFlags::FLAT_PEAK, "flat_peak"),
            (FeatureFlags::ZERO_PSD, "zero_psd"),
            (FeatureFlags::PARTIAL_WINDOW, "partial_window"),
            (FeatureFlags::COHERENCE_UNAVAILABLE, "coherence_unavailable"),
        ];
        NAMES.iter().filter(|(b, _)| self.contains(*b)).map(|(_, n)| *n).collect()
    }
}

/// One canonical vector. Slots awaiting imputation hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Masked-channel slots and padding.
    pub imputed_mask: Vec<bool>,
    pub manifest_hash: String,
    pub label: Option<PainLabel>,
    pub subject_id: String,
    pub flags: FeatureFlags,
}

/// Rows of feature vectors sharing one manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub manifest_hash: String,
    /// n × 537; NaN marks slots pending imputation.
    pub rows: ndarray::Array2<f64>,
    pub labels: Vec<Option<PainLabel>>,
    pub subjects: Vec<String>,
    pub flags: Vec<FeatureFlags>,
}

impl FeatureMatrix {
    pub fn empty(manifest_hash: &str) -> Self {
        FeatureMatrix {
            manifest_hash: manifest_hash.to_string(),
            rows: ndarray::Array2::zeros((0, TOTAL_SLOTS)),
            labels: Vec::new(),
            subjects: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn from_vectors(vectors: &[FeatureVector], manifest_hash: &str) -> Result<Self, FeatureError> {
        let mut flat = Vec::with_capacity(vectors.len() * TOTAL_SLOTS);
        for v in vectors {
            if v.manifest_hash != manifest_hash {
                return Err(FeatureError::ManifestMismatch { expected: manifest_hash.into(), got: v.manifest_hash.clone() });
            }
            if v.values.len() != TOTAL_SLOTS {
                return Err(FeatureError::SlotCountMismatch { expected: TOTAL_SLOTS, got: v.values.len() });
            }
            flat.extend_from_slice(&v.values);
        }
        Ok(FeatureMatrix {
            manifest_hash: manifest_hash.to_string(),
            rows: ndarray::Array2::from_shape_vec((vectors.len(), TOTAL_SLOTS), flat).expect("shape checked"),
            labels: vectors.iter().map(|v| v.label).collect(),
            subjects: vectors.iter().map(|v| v.subject_id.clone()).collect(),
            flags: vectors.iter().map(|v| v.flags).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// Binary targets (1 = high pain); errors if any row is unlabelled.
    pub fn targets(&self) -> Result<Vec<u8>, FeatureError> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.map(PainLabel::as_class).ok_or_else(|| FeatureError::Format(format!("row {i} has no label"))))
            .collect()
    }

    /// Distinct subjects in first-appearance order.
    pub fn subject_list(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.subjects {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        out
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            manifest_hash: self.manifest_hash.clone(),
            rows: self.rows.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            flags: idx.iter().map(|&i| self.flags[i]).collect(),
        }
    }

    /// Appends another matrix with the same manifest.
    pub fn append(&mut self, other: &FeatureMatrix) -> Result<(), FeatureError> {
        if other.manifest_hash != self.manifest_hash {
            return Err(FeatureError::ManifestMismatch {
                expected: self.manifest_hash.clone(),
                got: other.manifest_hash.clone(),
            });
        }
        self.rows.append(ndarray::Axis(0), other.rows.view()).expect("equal widths");
        self.labels.extend_from_slice(&other.labels);
        self.subjects.extend(other.subjects.iter().cloned());
        self.flags.extend_from_slice(&other.flags);
        Ok(())
    }
}
