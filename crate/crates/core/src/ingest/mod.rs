//! Recording bundle ingestion.
//!
//! A recording is stored as three files sharing a stem: an INI-style ASCII
//! header (`.vhdr`), a flat binary sample file (`.eeg`) and an ASCII marker
//! file (`.vmrk`). The grammar follows the BrainVision Core Data Format 1.0.

mod bundle;
mod cache;
mod epochs;
mod header;
mod markers;
mod signal;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{load_recording, load_recording_as, write_bundle};
pub use cache::{read_epoch_cache, write_epoch_cache, EPOCH_CACHE_MAGIC, EPOCH_CACHE_VERSION};
pub use epochs::{extract_epochs, EpochConfig, EpochStats};
pub use header::{parse_header, render_header};
pub use markers::{parse_markers, render_markers};
pub use signal::{encode_signal, read_signal};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header is missing section [{0}]")]
    MissingSection(String),
    #[error("header is missing required key `{0}`")]
    MissingRequiredKey(String),
    #[error("unsupported binary format `{0}`")]
    UnsupportedBinaryFormat(String),
    #[error("invalid value for `{key}`: {value}")]
    InvalidValue { key: String, value: String },
    #[error("malformed marker entry on line {line}: {reason}")]
    MalformedMarkerLine { line: usize, reason: String },
    #[error("binary data truncated: {trailing} trailing bytes do not form a full frame")]
    TruncatedData { trailing: usize },
    #[error("data orientation `{0}` is not supported")]
    OrientationUnsupported(String),
    #[error("companion file missing: {0}")]
    CompanionFileMissing(String),
    #[error("recording has no stimulus markers in the label map")]
    NoStimulusMarkers,
    #[error("epoch cache: {0}")]
    Cache(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryFormat {
    Int16,
    Float32,
}

impl BinaryFormat {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            BinaryFormat::Int16 => 2,
            BinaryFormat::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Multiplexed,
    Vectorized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub channel_names: Vec<String>,
    pub channel_count: usize,
    pub sampling_rate_hz: f64,
    /// Physical units (µV) per raw count, one per channel.
    pub resolution_per_channel: Vec<f64>,
    pub binary_format: BinaryFormat,
    pub orientation: Orientation,
    pub reference_label: String,
    pub data_filename: String,
    pub marker_filename: String,
}

impl RecordingHeader {
    pub fn new(channel_names: Vec<String>, sampling_rate_hz: f64, binary_format: BinaryFormat) -> Self {
        let n = channel_names.len();
        RecordingHeader {
            channel_count: n,
            channel_names,
            sampling_rate_hz,
            resolution_per_channel: vec![1.0; n],
            binary_format,
            orientation: Orientation::Multiplexed,
            reference_label: String::new(),
            data_filename: String::new(),
            marker_filename: String::new(),
        }
    }

    pub fn sampling_interval_us(&self) -> f64 {
        1e6 / self.sampling_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerEvent {
    /// 1-based ordinal from the `Mk<n>` key.
    pub index: usize,
    pub kind: String,
    pub description: String,
    /// 0-based sample offset into the signal.
    pub position_samples: u64,
    pub duration_samples: u64,
    /// 0 means the marker applies to all channels.
    pub channel_ref: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub header: RecordingHeader,
    /// Channel-major, µV.
    pub samples: Array2<f64>,
    pub markers: Vec<MarkerEvent>,
    pub subject_id: String,
}

impl RawRecording {
    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PainLabel {
    LowPain,
    HighPain,
}

impl PainLabel {
    /// 1 for the positive (high pain) class.
    pub fn as_class(self) -> u8 {
        match self {
            PainLabel::LowPain => 0,
            PainLabel::HighPain => 1,
        }
    }

    pub fn from_class(c: u8) -> Option<Self> {
        match c {
            0 => Some(PainLabel::LowPain),
            1 => Some(PainLabel::HighPain),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PainLabel::LowPain => "low_pain",
            PainLabel::HighPain => "high_pain",
        }
    }
}

impl fmt::Display for PainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A stimulus-locked window of multichannel signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub subject_id: String,
    pub label: PainLabel,
    pub onset_sample: u64,
    /// Channel-major, channels × samples.
    pub samples: Array2<f64>,
    pub fs_hz: f64,
    /// `true` = usable.
    pub channel_mask: Vec<bool>,
}

impl Epoch {
    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }
}

/// Epochs sharing one channel layout, grouped by participant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochSet {
    pub channel_names: Vec<String>,
    pub epochs: Vec<Epoch>,
    pub subjects: Vec<String>,
}

impl EpochSet {
    pub fn new(channel_names: Vec<String>) -> Self {
        EpochSet { channel_names, epochs: Vec::new(), subjects: Vec::new() }
    }

    pub fn push(&mut self, epoch: Epoch) {
        if !self.subjects.contains(&epoch.subject_id) {
            self.subjects.push(epoch.subject_id.clone());
        }
        self.epochs.push(epoch);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// (low, high) epoch counts for one subject.
    pub fn class_counts(&self, subject: &str) -> (usize, usize) {
        self.epochs
            .iter()
            .filter(|e| e.subject_id == subject)
            .fold((0, 0), |(lo, hi), e| match e.label {
                PainLabel::LowPain => (lo + 1, hi),
                PainLabel::HighPain => (lo, hi + 1),
            })
    }

    pub fn label_counts(&self) -> (usize, usize) {
        self.epochs.iter().fold((0, 0), |(lo, hi), e| match e.label {
            PainLabel::LowPain => (lo + 1, hi),
            PainLabel::HighPain => (lo, hi + 1),
        })
    }

    /// Appends another set with the same channel layout.
    pub fn merge(&mut self, other: EpochSet) -> Result<(), IngestError> {
        if self.channel_names.is_empty() && self.epochs.is_empty() {
            self.channel_names = other.channel_names.clone();
        }
        if self.channel_names != other.channel_names {
            return Err(IngestError::InvalidValue {
                key: "channel_names".into(),
                value: "epoch sets have different channel layouts".into(),
            });
        }
        for e in other.epochs {
            self.push(e);
        }
        Ok(())
    }

    /// Keeps the epochs for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&Epoch) -> bool) -> EpochSet {
        let mut out = EpochSet::new(self.channel_names.clone());
        for e in &self.epochs {
            if keep(e) {
                out.push(e.clone());
            }
        }
        out
    }
}

/// Normalises a marker description for label matching: case-folded, no whitespace.
pub(crate) fn normalize_description(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}
