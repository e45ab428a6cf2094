use std::f64::consts::PI;

use super::{FilterSpec, PreprocessError};
use crate::dsp::filter::{design_fir_highpass, filtfilt, filtfilt_chain, Biquad, Stage};

/// Zero-phase windowed-sinc high-pass, run forward and backward.
pub fn highpass_zero_phase(signal: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>, PreprocessError> {
    spec.validate(fs)?;
    let pad = 3 * spec.fir_taps;
    if signal.len() <= pad {
        return Err(PreprocessError::SignalTooShort { needed: pad, got: signal.len() });
    }
    let taps = design_fir_highpass(spec.fir_taps, spec.highpass_cutoff_hz, fs);
    Ok(filtfilt(&Stage::Fir(taps), signal, pad))
}

/// Padding that spans three time constants of the notch's pole pair.
pub(crate) fn notch_pad(spec: &FilterSpec, fs: f64) -> usize {
    3 * (spec.notch_q * fs / (PI * spec.notch_hz)).ceil() as usize
}

/// Zero-phase second-order IIR notch.
pub fn notch_zero_phase(signal: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>, PreprocessError> {
    if !(spec.notch_hz > 0.0 && spec.notch_hz < fs / 2.0) {
        return Err(PreprocessError::InvalidSpec(format!("notch {} Hz must lie below fs/2", spec.notch_hz)));
    }
    let bq = Biquad::notch(spec.notch_hz, spec.notch_q, fs);
    Ok(filtfilt(&Stage::Biquad(bq), signal, notch_pad(spec, fs)))
}

/// Streaming filter: Butterworth band-pass (second-order high- and low-pass
/// sections) followed by the notch, each run forward-backward over the whole
/// window with odd-reflection padding of up to `pad` samples.
pub fn bandpass_notch_zero_phase(signal: &[f64], fs: f64, spec: &FilterSpec, pad: usize) -> Vec<f64> {
    let mut stages = Vec::with_capacity(3);
    if let Some((lo, hi)) = spec.bandpass_hz {
        stages.push(Stage::Biquad(Biquad::highpass(lo, fs)));
        if hi < fs / 2.0 {
            stages.push(Stage::Biquad(Biquad::lowpass(hi, fs)));
        }
    }
    if spec.notch_hz < fs / 2.0 {
        stages.push(Stage::Biquad(Biquad::notch(spec.notch_hz, spec.notch_q, fs)));
    }
    filtfilt_chain(&stages, signal, pad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_signal_rejected() {
        let spec = FilterSpec::default();
        assert!(matches!(
            highpass_zero_phase(&[0.0; 3003], 500.0, &spec),
            Err(PreprocessError::SignalTooShort { needed: 3003, got: 3003 })
        ));
    }

    #[test]
    fn constant_is_removed() {
        let y = highpass_zero_phase(&vec![5.0; 6000], 500.0, &FilterSpec::default()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn notch_of_zero_is_zero() {
        let y = notch_zero_phase(&[0.0; 1000], 500.0, &FilterSpec::default()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_rejects_frequency_above_nyquist() {
        let spec = FilterSpec { notch_hz: 60.0, ..Default::default() };
        assert!(notch_zero_phase(&[0.0; 100], 100.0, &spec).is_err());
    }
}
