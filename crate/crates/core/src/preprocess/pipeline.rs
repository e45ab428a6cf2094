use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    detect_bad_channels, estimate_snr_db, highpass_zero_phase, notch_zero_phase, reject_artifact_epochs, FilterSpec,
    PreprocessError,
};
use crate::dsp::resample::PolyphaseResampler;
use crate::ingest::{extract_epochs, EpochConfig, EpochSet, RawRecording};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub filter: FilterSpec,
    pub target_rate_hz: f64,
    pub ptp_threshold_uv: f64,
    pub z_threshold: f64,
    pub epoch: EpochConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            filter: FilterSpec::default(),
            target_rate_hz: 500.0,
            ptp_threshold_uv: 150.0,
            z_threshold: 3.0,
            epoch: EpochConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub subject_id: String,
    pub source_rate_hz: f64,
    pub output_rate_hz: f64,
    pub bad_channels: Vec<String>,
    pub epochs_before: usize,
    pub epochs_after: usize,
    pub rejection_rate: f64,
    /// On unfiltered epochs, all channels; `None` when undefined.
    pub snr_before_db: Option<f64>,
    pub snr_after_db: Option<f64>,
}

fn map_rows(x: &Array2<f64>, f: impl Fn(&[f64]) -> std::result::Result<Vec<f64>, PreprocessError> + Sync) -> Result<Array2<f64>> {
    let inputs: Vec<Vec<f64>> = x.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let rows: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|r| f(r))
        .collect::<std::result::Result<_, _>>()?;
    let n = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((x.nrows(), n), flat).expect("rows share one length"))
}

/// Full offline chain for one recording: resample to the target rate,
/// zero-phase high-pass and notch, bad-channel masking on the continuous
/// data, epoching, artifact rejection, SNR before and after.
pub fn preprocess_recording(rec: &RawRecording, cfg: &PreprocessConfig) -> Result<(EpochSet, PreprocessReport)> {
    let fs_in = rec.header.sampling_rate_hz;
    let fs = cfg.target_rate_hz;
    cfg.filter.validate(fs)?;
    let resampler = PolyphaseResampler::new(fs_in, fs);
    let mut work = rec.clone();
    if !resampler.is_identity() {
        work.samples = map_rows(&rec.samples, |r| Ok(resampler.process(r)))?;
        let ratio = fs / fs_in;
        let n = work.samples.ncols() as u64;
        for m in &mut work.markers {
            m.position_samples = (m.position_samples as f64 * ratio).round() as u64;
        }
        work.markers.retain(|m| m.position_samples < n);
        work.header.sampling_rate_hz = fs;
        log::info!("{}: resampled {fs_in} Hz -> {fs} Hz", rec.subject_id);
    }
    let raw_snr = extract_epochs(&work, &cfg.epoch).ok().and_then(|(s, _)| estimate_snr_db(&s).ok());

    let spec = &cfg.filter;
    work.samples = map_rows(&work.samples, |r| {
        let y = highpass_zero_phase(r, fs, spec)?;
        notch_zero_phase(&y, fs, spec)
    })?;

    let quality = detect_bad_channels(work.samples.view(), cfg.z_threshold)?;
    let usable = quality.usable();
    let bad_channels: Vec<String> = rec
        .header
        .channel_names
        .iter()
        .zip(&quality.bad_mask)
        .filter(|(_, &b)| b)
        .map(|(n, _)| n.clone())
        .collect();
    if !bad_channels.is_empty() {
        log::info!("{}: masked {:?}", rec.subject_id, bad_channels);
    }

    let (mut set, _) = extract_epochs(&work, &cfg.epoch)?;
    for e in &mut set.epochs {
        e.channel_mask = usable.clone();
    }
    let before = set.len();
    let (kept, rate) = reject_artifact_epochs(&set, cfg.ptp_threshold_uv)?;
    let report = PreprocessReport {
        subject_id: rec.subject_id.clone(),
        source_rate_hz: fs_in,
        output_rate_hz: fs,
        bad_channels,
        epochs_before: before,
        epochs_after: kept.len(),
        rejection_rate: rate,
        snr_before_db: raw_snr,
        snr_after_db: estimate_snr_db(&kept).ok(),
    };
    Ok((kept, report))
}

/// Cleaning for already-cut epochs. Each epoch is resampled and notched;
/// the high-pass is applied only to epochs longer than three kernel lengths
/// and skipped (with a warning) otherwise. Bad channels are detected per
/// subject on the concatenated epochs.
pub fn preprocess_epochs(set: &EpochSet, cfg: &PreprocessConfig) -> Result<(EpochSet, PreprocessReport)> {
    let fs = cfg.target_rate_hz;
    cfg.filter.validate(fs)?;
    let raw_snr = estimate_snr_db(set).ok();
    let mut out = EpochSet::new(set.channel_names.clone());
    let mut skipped_hp = 0usize;
    let source_rate = set.epochs.first().map_or(fs, |e| e.fs_hz);
    for e in &set.epochs {
        let resampler = PolyphaseResampler::new(e.fs_hz, fs);
        let long_enough = resampler.output_len(e.n_samples()) > 3 * cfg.filter.fir_taps;
        if !long_enough {
            skipped_hp += 1;
        }
        let samples = map_rows(&e.samples, |r| {
            let y = resampler.process(r);
            let y = if long_enough { highpass_zero_phase(&y, fs, &cfg.filter)? } else { y };
            notch_zero_phase(&y, fs, &cfg.filter)
        })?;
        let mut e2 = e.clone();
        e2.samples = samples;
        e2.fs_hz = fs;
        out.push(e2);
    }
    if skipped_hp > 0 {
        log::warn!("high-pass skipped for {skipped_hp} epochs shorter than {} samples", 3 * cfg.filter.fir_taps);
    }

    let mut bad_channels = Vec::new();
    if set.channel_names.len() >= 4 {
        for subject in out.subjects.clone() {
            let idx: Vec<usize> = (0..out.len()).filter(|&i| out.epochs[i].subject_id == subject).collect();
            let views: Vec<_> = idx.iter().map(|&i| out.epochs[i].samples.view()).collect();
            let joined = ndarray::concatenate(Axis(1), &views).expect("epochs share channel count");
            let q = detect_bad_channels(joined.view(), cfg.z_threshold)?;
            for &i in &idx {
                let m = &mut out.epochs[i].channel_mask;
                m.iter_mut().zip(&q.bad_mask).for_each(|(u, &b)| *u = *u && !b);
            }
            for (name, _) in set.channel_names.iter().zip(&q.bad_mask).filter(|(_, &b)| b) {
                bad_channels.push(format!("{subject}:{name}"));
            }
        }
    }

    let before = out.len();
    let (kept, rate) = reject_artifact_epochs(&out, cfg.ptp_threshold_uv)?;
    let report = PreprocessReport {
        subject_id: set.subjects.join(","),
        source_rate_hz: source_rate,
        output_rate_hz: fs,
        bad_channels,
        epochs_before: before,
        epochs_after: kept.len(),
        rejection_rate: rate,
        snr_before_db: raw_snr,
        snr_after_db: estimate_snr_db(&kept).ok(),
    };
    Ok((kept, report))
}
