//! Welch PSD, single-segment periodograms and segment-averaged cross spectra.

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::window::hann_periodic;
use super::{mean, rfft_padded};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("signal too short: need {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("too few segments: need {needed}, got {got}")]
    TooFewSegments { needed: usize, got: usize },
    #[error("signals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WelchParams {
    pub segment_len: usize,
    pub overlap: usize,
    pub nfft: usize,
}

impl WelchParams {
    /// Segment of `segment_s` seconds, `overlap_frac` overlap, FFT length the
    /// next power of two at or above max(segment, 512).
    pub fn from_seconds(segment_s: f64, overlap_frac: f64, fs: f64) -> Self {
        let segment_len = ((segment_s * fs).round() as usize).max(2);
        let overlap = ((segment_len as f64) * overlap_frac).floor() as usize;
        WelchParams { segment_len, overlap, nfft: segment_len.max(512).next_power_of_two() }
    }

    pub fn step(&self) -> usize {
        (self.segment_len - self.overlap).max(1)
    }

    pub fn n_segments(&self, n: usize) -> usize {
        if n < self.segment_len {
            0
        } else {
            (n - self.segment_len) / self.step() + 1
        }
    }
}

/// One-sided density spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Σ psd·Δf, the rectangle-rule total power.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df()
    }
}

fn freqs(nfft: usize, fs: f64) -> Vec<f64> {
    (0..=nfft / 2).map(|k| k as f64 * fs / nfft as f64).collect()
}

fn one_sided_scale(k: usize, nfft: usize) -> f64 {
    if k == 0 || (nfft % 2 == 0 && k == nfft / 2) {
        1.0
    } else {
        2.0
    }
}

fn segment_spectrum(seg: &[f64], window: &[f64], nfft: usize) -> Vec<Complex<f64>> {
    let m = mean(seg);
    let tapered: Vec<f64> = seg.iter().zip(window).map(|(v, w)| (v - m) * w).collect();
    let mut spec = rfft_padded(&tapered, nfft);
    spec.truncate(nfft / 2 + 1);
    spec
}

/// Welch estimate with a periodic Hann taper and per-segment mean removal.
pub fn welch_psd(x: &[f64], fs: f64, p: &WelchParams) -> Result<Spectrum, SpectralError> {
    let n_seg = p.n_segments(x.len());
    if n_seg == 0 {
        return Err(SpectralError::SignalTooShort { needed: p.segment_len, got: x.len() });
    }
    let window = hann_periodic(p.segment_len);
    let u: f64 = window.iter().map(|w| w * w).sum();
    let nfft = p.nfft.max(p.segment_len);
    let mut acc = vec![0.0; nfft / 2 + 1];
    for s in 0..n_seg {
        let start = s * p.step();
        let spec = segment_spectrum(&x[start..start + p.segment_len], &window, nfft);
        for (a, c) in acc.iter_mut().zip(&spec) {
            *a += c.norm_sqr();
        }
    }
    let norm = 1.0 / (fs * u * n_seg as f64);
    let psd = acc.iter().enumerate().map(|(k, a)| a * norm * one_sided_scale(k, nfft)).collect();
    Ok(Spectrum { freqs: freqs(nfft, fs), psd })
}

/// Hann-tapered periodogram of the whole input, zero-padded to `nfft`.
pub fn periodogram(x: &[f64], fs: f64, nfft: usize) -> Spectrum {
    let n = x.len().max(1);
    let nfft = nfft.max(n);
    let window = hann_periodic(n);
    let u: f64 = window.iter().map(|w| w * w).sum::<f64>().max(f64::MIN_POSITIVE);
    let spec = if x.is_empty() { vec![Complex::new(0.0, 0.0); nfft / 2 + 1] } else { segment_spectrum(x, &window, nfft) };
    let norm = 1.0 / (fs * u);
    let psd = spec.iter().enumerate().map(|(k, c)| c.norm_sqr() * norm * one_sided_scale(k, nfft)).collect();
    Spectrum { freqs: freqs(nfft, fs), psd }
}

/// Segment-averaged auto and cross spectra (unnormalised; only ratios are used).
pub struct CrossSpectra {
    pub freqs: Vec<f64>,
    pub sxx: Vec<f64>,
    pub syy: Vec<f64>,
    pub sxy: Vec<Complex<f64>>,
    pub n_segments: usize,
}

pub fn cross_spectra(x: &[f64], y: &[f64], fs: f64, p: &WelchParams) -> Result<CrossSpectra, SpectralError> {
    if x.len() != y.len() {
        return Err(SpectralError::LengthMismatch(x.len(), y.len()));
    }
    let n_seg = p.n_segments(x.len());
    if n_seg == 0 {
        return Err(SpectralError::SignalTooShort { needed: p.segment_len, got: x.len() });
    }
    let window = hann_periodic(p.segment_len);
    let nfft = p.nfft.max(p.segment_len);
    let nb = nfft / 2 + 1;
    let mut sxx = vec![0.0; nb];
    let mut syy = vec![0.0; nb];
    let mut sxy = vec![Complex::new(0.0, 0.0); nb];
    for s in 0..n_seg {
        let start = s * p.step();
        let fx = segment_spectrum(&x[start..start + p.segment_len], &window, nfft);
        let fy = segment_spectrum(&y[start..start + p.segment_len], &window, nfft);
        for k in 0..nb {
            sxx[k] += fx[k].norm_sqr();
            syy[k] += fy[k].norm_sqr();
            sxy[k] += fx[k] * fy[k].conj();
        }
    }
    Ok(CrossSpectra { freqs: freqs(nfft, fs), sxx, syy, sxy, n_segments: n_seg })
}
