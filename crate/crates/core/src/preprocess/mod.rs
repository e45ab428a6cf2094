//! Offline cleaning: zero-phase high-pass and notch, resampling, bad-channel
//! detection, artifact-epoch rejection and an evoked SNR estimate.

mod channels;
mod epochs;
mod filters;
mod pipeline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::dsp::resample::resample_polyphase;
pub use channels::{channel_statistics, detect_bad_channels, robust_z, ChannelQuality, ChannelStats};
pub use epochs::{estimate_snr_db, reject_artifact_epochs, SNR_CAP_DB};
pub use filters::{bandpass_notch_zero_phase, highpass_zero_phase, notch_zero_phase};
pub use pipeline::{preprocess_epochs, preprocess_recording, PreprocessConfig, PreprocessReport};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("signal too short: need more than {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("invalid filter specification: {0}")]
    InvalidSpec(String),
    #[error("bad-channel detection needs at least 4 channels, got {0}")]
    TooFewChannels(usize),
    #[error("every epoch exceeded the artifact threshold of {0} µV")]
    AllEpochsRejected(f64),
    #[error("SNR needs at least two epochs of one label")]
    InsufficientEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub highpass_cutoff_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
    /// Odd; the kernel is symmetric (linear phase).
    pub fir_taps: usize,
    /// Band-pass edges used by the streaming path.
    pub bandpass_hz: Option<(f64, f64)>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { highpass_cutoff_hz: 1.0, notch_hz: 50.0, notch_q: 30.0, fir_taps: 1001, bandpass_hz: None }
    }
}

impl FilterSpec {
    /// Streaming configuration: 1–90 Hz band-pass plus the 50 Hz notch.
    pub fn realtime() -> Self {
        FilterSpec { bandpass_hz: Some((1.0, 90.0)), ..Default::default() }
    }

    pub fn validate(&self, fs: f64) -> Result<(), PreprocessError> {
        let nyq = fs / 2.0;
        if !(self.highpass_cutoff_hz > 0.0 && self.highpass_cutoff_hz < self.notch_hz && self.notch_hz < nyq) {
            return Err(PreprocessError::InvalidSpec(format!(
                "need 0 < cutoff ({}) < notch ({}) < fs/2 ({nyq})",
                self.highpass_cutoff_hz, self.notch_hz
            )));
        }
        if self.fir_taps % 2 == 0 || self.fir_taps == 0 {
            return Err(PreprocessError::InvalidSpec(format!("fir_taps must be odd, got {}", self.fir_taps)));
        }
        if !(self.notch_q > 0.0) {
            return Err(PreprocessError::InvalidSpec("notch_q must be positive".into()));
        }
        if let Some((lo, hi)) = self.bandpass_hz {
            if !(lo > 0.0 && lo < hi) {
                return Err(PreprocessError::InvalidSpec(format!("band-pass edges {lo}..{hi} are not ordered")));
            }
        }
        Ok(())
    }
}
