use super::FeatureError;

/// Mean, SD, skewness, kurtosis (non-excess), zero-crossing rate (s⁻¹) and
/// peak-to-peak of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStats {
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub zero_crossing_rate: f64,
    pub peak_to_peak: f64,
    /// Zero variance: skewness and kurtosis set to 0.
    pub degenerate: bool,
}

impl TimeStats {
    pub fn to_array(&self) -> [f64; 6] {
        [self.mean, self.sd, self.skewness, self.kurtosis, self.zero_crossing_rate, self.peak_to_peak]
    }
}

pub fn time_stats(x: &[f64], fs: f64) -> Result<TimeStats, FeatureError> {
    let n = x.len();
    if n < 4 {
        return Err(FeatureError::SignalTooShort { needed: 4, got: n });
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let sd = m2.sqrt();
    let degenerate = !(m2 > mean.abs().max(1.0) * 1e-24);
    let (skewness, kurtosis) = if degenerate { (0.0, 0.0) } else { (m3 / (m2 * sd), m4 / (m2 * m2)) };
    let mut crossings = 0usize;
    if !degenerate {
        let mut prev = x[0] - mean >= 0.0;
        for &v in &x[1..] {
            let cur = v - mean >= 0.0;
            if cur != prev {
                crossings += 1;
            }
            prev = cur;
        }
    }
    Ok(TimeStats {
        mean,
        sd,
        skewness,
        kurtosis,
        zero_crossing_rate: crossings as f64 / (nf / fs),
        peak_to_peak: hi - lo,
        degenerate,
    })
}

/// Hjorth activity, mobility and complexity; flagged zeros for a flat input.
pub fn hjorth(x: &[f64]) -> Result<([f64; 3], bool), FeatureError> {
    if x.len() < 3 {
        return Err(FeatureError::SignalTooShort { needed: 3, got: x.len() });
    }
    let var = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.len() as f64
    };
    let d1: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
    let (v0, v1, v2) = (var(x), var(&d1), var(&d2));
    if !(v0 > 0.0) || !(v1 > 0.0) {
        return Ok(([v0, 0.0, 0.0], true));
    }
    let mob = (v1 / v0).sqrt();
    let mob_d = (v2 / v1).sqrt();
    Ok(([v0, mob, mob_d / mob], false))
}
