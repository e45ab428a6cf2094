use super::config::{BandRatio, FrequencyBand};
use super::FeatureError;
use crate::dsp::spectral::{cross_spectra, periodogram, WelchParams};

/// Denominator floor for band ratios.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Trapezoidal integral of `psd` over the bins with lo ≤ f < hi.
///
/// A band that starts at or above Nyquist is an error; one that straddles it
/// is integrated up to the last bin (see [`band_clipped`]).
pub fn band_power(freqs: &[f64], psd: &[f64], band: &FrequencyBand) -> Result<f64, FeatureError> {
    let nyq = freqs.last().copied().unwrap_or(0.0);
    if band.lo_hz >= nyq {
        return Err(FeatureError::BandAboveNyquist { band: band.name.as_str().into(), nyquist: nyq });
    }
    Ok(integrate(freqs, psd, band.lo_hz, band.hi_hz))
}

pub(crate) fn integrate(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (&f, &p) in freqs.iter().zip(psd) {
        if f < lo || f >= hi {
            continue;
        }
        if let Some((pf, pp)) = prev {
            acc += 0.5 * (p + pp) * (f - pf);
        }
        prev = Some((f, p));
    }
    acc
}

/// True when the band's upper edge lies above fs/2.
pub fn band_clipped(band: &FrequencyBand, fs: f64) -> bool {
    band.hi_hz > fs / 2.0
}

/// Band powers of each sub-window (ms offsets from the window start), ordered
/// band-major then window-minor, from Hann periodograms zero-padded to at
/// least `nfft` points.
pub fn subwindow_band_powers(
    x: &[f64],
    fs: f64,
    bands: &[FrequencyBand],
    windows_ms: &[(f64, f64)],
    nfft: usize,
) -> Result<Vec<f64>, FeatureError> {
    let mut per_window = Vec::with_capacity(windows_ms.len());
    for &(a, b) in windows_ms {
        let i0 = (a * fs / 1000.0).round() as usize;
        let i1 = (b * fs / 1000.0).round() as usize;
        if i1 > x.len() || i1 <= i0 {
            return Err(FeatureError::SignalTooShort { needed: i1.max(i0 + 1), got: x.len() });
        }
        let seg = &x[i0..i1];
        let spec = periodogram(seg, fs, nfft.max(seg.len().next_power_of_two()));
        let powers: Vec<f64> = bands.iter().map(|bd| integrate(&spec.freqs, &spec.psd, bd.lo_hz, bd.hi_hz)).collect();
        per_window.push(powers);
    }
    let mut out = Vec::with_capacity(bands.len() * windows_ms.len());
    for bi in 0..bands.len() {
        for w in &per_window {
            out.push(w[bi]);
        }
    }
    Ok(out)
}

/// The five ratio indices; the flag is set when any denominator was floored.
pub fn band_ratios(powers: &[f64; 5]) -> ([f64; 5], bool) {
    let mut out = [0.0; 5];
    let mut floored = false;
    for (o, r) in out.iter_mut().zip(BandRatio::ALL) {
        let (num, den) = r.terms(powers);
        if den < RATIO_FLOOR {
            floored = true;
        }
        *o = num / den.max(RATIO_FLOOR);
    }
    (out, floored)
}

/// Normalised Shannon entropy of a PSD in [0, 1]; flagged 0 for an all-zero PSD.
pub fn spectral_entropy(psd: &[f64]) -> (f64, bool) {
    let total: f64 = psd.iter().sum();
    if psd.len() < 2 || !(total > 0.0) {
        return (0.0, true);
    }
    let h: f64 = psd
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    ((h / (psd.len() as f64).ln()).clamp(0.0, 1.0), false)
}

/// Peak frequency and half-power bandwidth within a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakInfo {
    pub peak_hz: f64,
    pub bandwidth_hz: f64,
    /// Flat spectrum: midpoint / full-band convention used.
    pub flat: bool,
}

/// Argmax bin within [lo, hi) and the width of the contiguous run of bins
/// around it with psd ≥ peak/2 (bins × Δf, clipped to the band).
pub fn peak_frequency(freqs: &[f64], psd: &[f64], band: &FrequencyBand) -> Result<PeakInfo, FeatureError> {
    let idx: Vec<usize> = (0..freqs.len()).filter(|&k| freqs[k] >= band.lo_hz && freqs[k] < band.hi_hz).collect();
    if idx.len() < 3 {
        return Err(FeatureError::TooFewBins { band: band.name.as_str().into(), bins: idx.len() });
    }
    let vals: Vec<f64> = idx.iter().map(|&k| psd[k]).collect();
    let (mut best, mut max, mut min) = (0, vals[0], vals[0]);
    for (i, &v) in vals.iter().enumerate() {
        if v > max {
            max = v;
            best = i;
        }
        min = min.min(v);
    }
    let width = band.hi_hz - band.lo_hz;
    if !(max > min) {
        return Ok(PeakInfo { peak_hz: 0.5 * (band.lo_hz + band.hi_hz), bandwidth_hz: width, flat: true });
    }
    let half = max / 2.0;
    let mut l = best;
    while l > 0 && vals[l - 1] >= half {
        l -= 1;
    }
    let mut r = best;
    while r + 1 < vals.len() && vals[r + 1] >= half {
        r += 1;
    }
    let df = freqs[1] - freqs[0];
    Ok(PeakInfo { peak_hz: freqs[idx[best]], bandwidth_hz: ((r - l + 1) as f64 * df).min(width), flat: false })
}

/// Minimum number of Welch segments for a coherence estimate.
pub const MIN_COHERENCE_SEGMENTS: usize = 4;

/// Mean magnitude-squared coherence over bins in [lo, hi].
pub fn coherence(x: &[f64], y: &[f64], fs: f64, band: (f64, f64), p: &WelchParams) -> Result<f64, FeatureError> {
    let cs = cross_spectra(x, y, fs, p)?;
    if cs.n_segments < MIN_COHERENCE_SEGMENTS {
        return Err(FeatureError::TooFewSegments { needed: MIN_COHERENCE_SEGMENTS, got: cs.n_segments });
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for k in 0..cs.freqs.len() {
        let f = cs.freqs[k];
        if f < band.0 || f > band.1 {
            continue;
        }
        n += 1;
        let den = cs.sxx[k] * cs.syy[k];
        if den > 0.0 {
            acc += (cs.sxy[k].norm_sqr() / den).min(1.0);
        }
    }
    if n == 0 {
        return Err(FeatureError::TooFewBins { band: "coherence".into(), bins: 0 });
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::config::BandName;

    #[test]
    fn ratios_of_equal_powers() {
        let (r, f) = band_ratios(&[1.0; 5]);
        assert_eq!(r, [1.0; 5]);
        assert!(!f);
    }

    #[test]
    fn ratio_floor_flags() {
        let (r, f) = band_ratios(&[1.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(f);
        assert!(r.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn entropy_extremes() {
        assert!((spectral_entropy(&[2.0; 16]).0 - 1.0).abs() < 1e-12);
        let mut p = vec![0.0; 16];
        p[3] = 1.0;
        assert_eq!(spectral_entropy(&p), (0.0, false));
        assert_eq!(spectral_entropy(&[0.0; 8]), (0.0, true));
    }

    #[test]
    fn peak_picks_larger_tone() {
        let freqs: Vec<f64> = (0..64).map(|k| k as f64 * 0.5).collect();
        let mut psd = vec![0.01; 64];
        psd[18] = 1.0; // 9 Hz
        psd[24] = 2.0; // 12 Hz
        let band = FrequencyBand::new(BandName::Alpha, 8.0, 13.0);
        let p = peak_frequency(&freqs, &psd, &band).unwrap();
        assert_eq!(p.peak_hz, 12.0);
        assert_eq!(p.bandwidth_hz, 0.5);
    }

    #[test]
    fn flat_band_uses_midpoint() {
        let freqs: Vec<f64> = (0..64).map(|k| k as f64 * 0.5).collect();
        let band = FrequencyBand::new(BandName::Alpha, 8.0, 13.0);
        let p = peak_frequency(&freqs, &[1.0; 64], &band).unwrap();
        assert!(p.flat);
        assert_eq!(p.peak_hz, 10.5);
        assert_eq!(p.bandwidth_hz, 5.0);
    }

    #[test]
    fn band_above_nyquist() {
        let freqs: Vec<f64> = (0..=64).map(|k| k as f64).collect();
        let band = FrequencyBand::new(BandName::Gamma, 90.0, 120.0);
        assert!(matches!(band_power(&freqs, &[0.0; 65], &band), Err(FeatureError::BandAboveNyquist { .. })));
    }
}
