use ndarray::Axis;

use super::PreprocessError;
use crate::ingest::{EpochSet, PainLabel};

/// Reported when the residual (or the evoked average) has zero power.
pub const SNR_CAP_DB: f64 = 120.0;

fn max_ptp(e: &crate::ingest::Epoch) -> f64 {
    e.samples
        .axis_iter(Axis(0))
        .zip(&e.channel_mask)
        .filter(|(_, &ok)| ok)
        .map(|(row, _)| {
            let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if hi.is_finite() && lo.is_finite() {
                hi - lo
            } else if row.is_empty() {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Drops epochs whose largest peak-to-peak amplitude over usable channels
/// exceeds `ptp_threshold_uv`; returns the kept set and the rejected fraction.
pub fn reject_artifact_epochs(set: &EpochSet, ptp_threshold_uv: f64) -> Result<(EpochSet, f64), PreprocessError> {
    if !(ptp_threshold_uv > 0.0) {
        return Err(PreprocessError::InvalidSpec(format!("ptp threshold must be positive, got {ptp_threshold_uv}")));
    }
    if set.is_empty() {
        return Ok((set.clone(), 0.0));
    }
    let kept = set.filtered(|e| max_ptp(e) <= ptp_threshold_uv);
    if kept.is_empty() {
        return Err(PreprocessError::AllEpochsRejected(ptp_threshold_uv));
    }
    let rate = (set.len() - kept.len()) as f64 / set.len() as f64;
    Ok((kept, rate))
}

/// Evoked-to-residual power ratio in dB.
///
/// Per label, each trial is mean-centred per channel, the trials are
/// averaged, and the power of that average is divided by the mean power of
/// the single-trial residuals (trial − average). The dB value is averaged over
/// channels usable in every trial of the group, then over label groups with at
/// least two trials. Results are clamped to ±120 dB.
pub fn estimate_snr_db(set: &EpochSet) -> Result<f64, PreprocessError> {
    let mut group_snrs = Vec::new();
    for label in [PainLabel::LowPain, PainLabel::HighPain] {
        let trials: Vec<_> = set.epochs.iter().filter(|e| e.label == label).collect();
        if trials.len() < 2 {
            continue;
        }
        let n_ch = trials[0].n_channels();
        let n_s = trials.iter().map(|e| e.n_samples()).min().unwrap_or(0);
        if n_s == 0 {
            continue;
        }
        let mut ch_snrs = Vec::new();
        for c in 0..n_ch {
            if trials.iter().any(|e| !e.channel_mask.get(c).copied().unwrap_or(false)) {
                continue;
            }
            let centred: Vec<Vec<f64>> = trials
                .iter()
                .map(|e| {
                    let row = e.samples.row(c);
                    let row = &row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec())[..n_s];
                    let m = row.iter().sum::<f64>() / n_s as f64;
                    row.iter().map(|v| v - m).collect()
                })
                .collect();
            let mut avg = vec![0.0; n_s];
            for t in &centred {
                avg.iter_mut().zip(t).for_each(|(a, v)| *a += v);
            }
            let k = centred.len() as f64;
            avg.iter_mut().for_each(|a| *a /= k);
            let evoked = avg.iter().map(|v| v * v).sum::<f64>() / n_s as f64;
            let residual = centred
                .iter()
                .map(|t| t.iter().zip(&avg).map(|(v, a)| (v - a) * (v - a)).sum::<f64>() / n_s as f64)
                .sum::<f64>()
                / k;
            let db = if residual <= 0.0 {
                if evoked > 0.0 {
                    SNR_CAP_DB
                } else {
                    continue;
                }
            } else if evoked <= 0.0 {
                -SNR_CAP_DB
            } else {
                (10.0 * (evoked / residual).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
            };
            ch_snrs.push(db);
        }
        if !ch_snrs.is_empty() {
            group_snrs.push(ch_snrs.iter().sum::<f64>() / ch_snrs.len() as f64);
        }
    }
    if group_snrs.is_empty() {
        return Err(PreprocessError::InsufficientEpochs);
    }
    Ok(group_snrs.iter().sum::<f64>() / group_snrs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Epoch;
    use ndarray::Array2;

    fn epoch(label: PainLabel, f: impl Fn(usize, usize) -> f64) -> Epoch {
        Epoch {
            subject_id: "s".into(),
            label,
            onset_sample: 0,
            samples: Array2::from_shape_fn((2, 100), |(c, t)| f(c, t)),
            fs_hz: 100.0,
            channel_mask: vec![true; 2],
        }
    }

    #[test]
    fn ptp_threshold() {
        let mut set = EpochSet::new(vec!["a".into(), "b".into()]);
        set.push(epoch(PainLabel::LowPain, |_, t| if t == 5 { 40.0 } else { -40.0 }));
        set.push(epoch(PainLabel::LowPain, |c, t| if c == 1 && t == 5 { 500.0 } else { 0.0 }));
        let (kept, rate) = reject_artifact_epochs(&set, 150.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(rate, 0.5);
    }

    #[test]
    fn masked_channel_spike_is_ignored() {
        let mut set = EpochSet::new(vec!["a".into(), "b".into()]);
        let mut e = epoch(PainLabel::LowPain, |c, t| if c == 1 && t == 5 { 500.0 } else { 0.0 });
        e.channel_mask[1] = false;
        set.push(e);
        assert_eq!(reject_artifact_epochs(&set, 150.0).unwrap().1, 0.0);
    }

    #[test]
    fn all_rejected_is_an_error() {
        let mut set = EpochSet::new(vec!["a".into(), "b".into()]);
        set.push(epoch(PainLabel::LowPain, |_, t| t as f64 * 10.0));
        assert!(matches!(reject_artifact_epochs(&set, 150.0), Err(PreprocessError::AllEpochsRejected(_))));
    }

    #[test]
    fn identical_epochs_hit_the_cap() {
        let mut set = EpochSet::new(vec!["a".into(), "b".into()]);
        for _ in 0..3 {
            set.push(epoch(PainLabel::HighPain, |_, t| (t as f64 * 0.3).sin()));
        }
        assert_eq!(estimate_snr_db(&set).unwrap(), SNR_CAP_DB);
    }

    #[test]
    fn single_epoch_is_insufficient() {
        let mut set = EpochSet::new(vec!["a".into(), "b".into()]);
        set.push(epoch(PainLabel::HighPain, |_, t| t as f64));
        assert!(matches!(estimate_snr_db(&set), Err(PreprocessError::InsufficientEpochs)));
    }
}
