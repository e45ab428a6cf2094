use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::dsp::median;

/// MAD → σ for Gaussian data.
const MAD_SCALE: f64 = 1.4826;
/// Mean absolute deviation → σ for Gaussian data (√(π/2)).
const MEAN_AD_SCALE: f64 = 1.253_314_137_315_500_3;

/// Per-channel statistics the bad-channel rule is evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub variance: Vec<f64>,
    /// Mean |Pearson r| against every other channel; 0 for flat channels.
    pub mean_abs_correlation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelQuality {
    pub variance: Vec<f64>,
    pub mean_abs_correlation: Vec<f64>,
    /// `true` = bad.
    pub bad_mask: Vec<bool>,
    pub z_threshold: f64,
}

impl ChannelQuality {
    pub fn from_stats(stats: ChannelStats, z_threshold: f64) -> Self {
        let zv = robust_z(&stats.variance);
        let zc = robust_z(&stats.mean_abs_correlation);
        let bad_mask = zv.iter().zip(&zc).map(|(a, b)| a.abs() > z_threshold || b.abs() > z_threshold).collect();
        ChannelQuality {
            variance: stats.variance,
            mean_abs_correlation: stats.mean_abs_correlation,
            bad_mask,
            z_threshold,
        }
    }

    pub fn n_bad(&self) -> usize {
        self.bad_mask.iter().filter(|&&b| b).count()
    }

    /// Usable-channel mask (`true` = keep), the complement of `bad_mask`.
    pub fn usable(&self) -> Vec<bool> {
        self.bad_mask.iter().map(|b| !b).collect()
    }
}

/// Robust z-scores: (v − median) / (1.4826·MAD).
///
/// When more than half the values coincide the MAD collapses to zero; the
/// scale then falls back to 1.2533 × mean absolute deviation from the median,
/// and to z = 0 everywhere if that is zero too. Non-finite inputs score ±∞.
pub fn robust_z(values: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return vec![f64::INFINITY; values.len()];
    }
    let med = median(&finite);
    let dev: Vec<f64> = finite.iter().map(|v| (v - med).abs()).collect();
    let magnitude = finite.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // deviations at rounding level count as no dispersion
    let eps = magnitude * 1e-9;
    let mad = median(&dev);
    let scale = if mad > eps {
        MAD_SCALE * mad
    } else {
        let mean_ad = dev.iter().sum::<f64>() / dev.len() as f64;
        if mean_ad > eps {
            MEAN_AD_SCALE * mean_ad
        } else {
            0.0
        }
    };
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                f64::INFINITY
            } else if scale == 0.0 || (v - med).abs() <= eps {
                0.0
            } else {
                (v - med) / scale
            }
        })
        .collect()
}

/// Variance and mean absolute inter-channel correlation of a channel-major block.
pub fn channel_statistics(samples: ArrayView2<'_, f64>) -> ChannelStats {
    let (c, n) = samples.dim();
    let mut variance = Vec::with_capacity(c);
    let mut z = Array2::<f64>::zeros((c, n));
    let mut flat = vec![false; c];
    for (i, row) in samples.axis_iter(Axis(0)).enumerate() {
        let m = row.sum() / n.max(1) as f64;
        let ss: f64 = row.iter().map(|v| (v - m) * (v - m)).sum();
        let var = if n > 0 { ss / n as f64 } else { 0.0 };
        variance.push(var);
        let scale = ss.sqrt();
        if !(scale > 0.0) || !scale.is_finite() || var <= m.abs().max(1.0) * 1e-24 {
            flat[i] = true;
            continue;
        }
        z.row_mut(i).iter_mut().zip(row.iter()).for_each(|(d, v)| *d = (v - m) / scale);
    }
    let corr = z.dot(&z.t());
    let mean_abs_correlation = (0..c)
        .map(|i| {
            if flat[i] || c < 2 {
                return 0.0;
            }
            let s: f64 = (0..c).filter(|&j| j != i && !flat[j]).map(|j| corr[[i, j]].abs().min(1.0)).sum();
            s / (c - 1) as f64
        })
        .collect();
    ChannelStats { variance, mean_abs_correlation }
}

/// Flags channels whose variance or mean inter-channel correlation has
/// |robust z| above `z_threshold`.
pub fn detect_bad_channels(samples: ArrayView2<'_, f64>, z_threshold: f64) -> Result<ChannelQuality, PreprocessError> {
    if samples.nrows() < 4 {
        return Err(PreprocessError::TooFewChannels(samples.nrows()));
    }
    Ok(ChannelQuality::from_stats(channel_statistics(samples), z_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robust_z_of_symmetric_sample() {
        let z = robust_z(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        // median 3, MAD 1
        assert!((z[4] - 2.0 / MAD_SCALE).abs() < 1e-12);
        assert_eq!(z[2], 0.0);
    }

    #[test]
    fn collapsed_mad_uses_mean_deviation() {
        let z = robust_z(&[1.0, 1.0, 1.0, 1.0, 11.0]);
        // mean |dev| = 2
        assert!((z[4] - 10.0 / (MEAN_AD_SCALE * 2.0)).abs() < 1e-12);
        assert!(z[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nan_channel_scores_infinite() {
        let z = robust_z(&[1.0, f64::NAN, 2.0]);
        assert!(z[1].is_infinite());
    }

    #[test]
    fn too_few_channels() {
        let a = Array2::<f64>::zeros((3, 100));
        assert!(matches!(detect_bad_channels(a.view(), 3.0), Err(PreprocessError::TooFewChannels(3))));
    }
}
