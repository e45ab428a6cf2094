use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dsp::spectral::WelchParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandName {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl BandName {
    pub const ALL: [BandName; 5] = [BandName::Delta, BandName::Theta, BandName::Alpha, BandName::Beta, BandName::Gamma];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Delta => "delta",
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
            BandName::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub name: BandName,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl FrequencyBand {
    pub const fn new(name: BandName, lo_hz: f64, hi_hz: f64) -> Self {
        FrequencyBand { name, lo_hz, hi_hz }
    }

    /// δ 1–4, θ 4–8, α 8–13, β 13–30, γ 30–90 Hz.
    pub fn canonical() -> [FrequencyBand; 5] {
        [
            FrequencyBand::new(BandName::Delta, 1.0, 4.0),
            FrequencyBand::new(BandName::Theta, 4.0, 8.0),
            FrequencyBand::new(BandName::Alpha, 8.0, 13.0),
            FrequencyBand::new(BandName::Beta, 13.0, 30.0),
            FrequencyBand::new(BandName::Gamma, 30.0, 90.0),
        ]
    }
}

/// The five band-ratio indices, in manifest order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandRatio {
    GammaAlpha,
    DeltaTheta,
    ThetaAlpha,
    BetaAlpha,
    SlowFast,
}

impl BandRatio {
    pub const ALL: [BandRatio; 5] =
        [BandRatio::GammaAlpha, BandRatio::DeltaTheta, BandRatio::ThetaAlpha, BandRatio::BetaAlpha, BandRatio::SlowFast];

    pub fn as_str(self) -> &'static str {
        match self {
            BandRatio::GammaAlpha => "gamma/alpha",
            BandRatio::DeltaTheta => "delta/theta",
            BandRatio::ThetaAlpha => "theta/alpha",
            BandRatio::BetaAlpha => "beta/alpha",
            BandRatio::SlowFast => "(theta+alpha)/(beta+gamma)",
        }
    }

    /// (numerator, denominator) from powers ordered δ, θ, α, β, γ.
    pub fn terms(self, p: &[f64; 5]) -> (f64, f64) {
        let [d, t, a, b, g] = *p;
        match self {
            BandRatio::GammaAlpha => (g, a),
            BandRatio::DeltaTheta => (d, t),
            BandRatio::ThetaAlpha => (t, a),
            BandRatio::BetaAlpha => (b, a),
            BandRatio::SlowFast => (t + a, b + g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_s: f64,
    pub overlap: f64,
}

impl WelchConfig {
    pub fn params(&self, fs: f64) -> WelchParams {
        WelchParams::from_seconds(self.segment_s, self.overlap, fs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Offline,
    Realtime,
}

/// The 14-channel default montage.
pub const DEFAULT_CHANNELS: [&str; 14] =
    ["Fp1", "Fp2", "F3", "F4", "Fz", "FCz", "C3", "C4", "Cz", "P3", "P4", "Pz", "O1", "O2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub channels: Vec<String>,
    pub bands: Vec<FrequencyBand>,
    pub subwindows_ms: Vec<(f64, f64)>,
    pub subwindow_nfft: usize,
    pub sampen_m: usize,
    pub sampen_r_factor: f64,
    pub higuchi_kmax: usize,
    pub dwt_levels: usize,
    pub coherence_pairs: Vec<(String, String)>,
    pub coherence_band_hz: (f64, f64),
    pub welch: WelchConfig,
    /// Coherence segments are this fraction of the window (50% overlap).
    pub coherence_segment_fraction: f64,
    /// Bins used by the spectral entropy.
    pub entropy_band_hz: (f64, f64),
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::offline()
    }
}

impl FeatureConfig {
    pub fn offline() -> Self {
        FeatureConfig {
            channels: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            bands: FrequencyBand::canonical().to_vec(),
            subwindows_ms: vec![(0.0, 160.0), (160.0, 300.0), (300.0, 1000.0)],
            subwindow_nfft: 1024,
            sampen_m: 2,
            sampen_r_factor: 0.2,
            higuchi_kmax: 10,
            dwt_levels: 4,
            coherence_pairs: vec![("C3".into(), "C4".into()), ("F3".into(), "F4".into())],
            coherence_band_hz: (1.0, 40.0),
            welch: WelchConfig { segment_s: 1.0, overlap: 0.5 },
            coherence_segment_fraction: 0.25,
            entropy_band_hz: (1.0, 90.0),
        }
    }

    /// Same layout as [`offline`](Self::offline) with 0.5-s Welch segments.
    pub fn realtime() -> Self {
        FeatureConfig { welch: WelchConfig { segment_s: 0.5, overlap: 0.5 }, ..FeatureConfig::offline() }
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Offline => Self::offline(),
            Profile::Realtime => Self::realtime(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, FeatureError> {
        let cfg: FeatureConfig = toml::from_str(text).map_err(|e| FeatureError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::Config(m));
        if self.channels.is_empty() {
            return bad("channel list is empty".into());
        }
        if self.bands.len() != 5 || self.bands.iter().zip(BandName::ALL).any(|(b, n)| b.name != n) {
            return bad("bands must be delta, theta, alpha, beta, gamma in that order".into());
        }
        if self.bands.iter().any(|b| !(b.lo_hz >= 0.0 && b.lo_hz < b.hi_hz)) {
            return bad("band edges must satisfy 0 <= lo < hi".into());
        }
        let mut prev_end = 0.0;
        for &(a, b) in &self.subwindows_ms {
            if !(a >= prev_end && a < b) {
                return bad(format!("sub-window ({a}, {b}) ms overlaps or is out of order"));
            }
            prev_end = b;
        }
        if !(self.sampen_r_factor > 0.0) {
            return bad("sampen_r_factor must be positive".into());
        }
        if self.sampen_m == 0 {
            return bad("sampen_m must be at least 1".into());
        }
        if self.higuchi_kmax < 2 {
            return bad("higuchi_kmax must be at least 2".into());
        }
        if self.dwt_levels == 0 {
            return bad("dwt_levels must be at least 1".into());
        }
        if !(self.welch.segment_s > 0.0 && (0.0..1.0).contains(&self.welch.overlap)) {
            return bad("welch segment must be positive with overlap in [0, 1)".into());
        }
        if !(self.coherence_segment_fraction > 0.0 && self.coherence_segment_fraction <= 1.0) {
            return bad("coherence_segment_fraction must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = FeatureConfig::realtime();
        let back = FeatureConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = FeatureConfig::from_toml("higuchi_kmax = 8\n").unwrap();
        assert_eq!(cfg.higuchi_kmax, 8);
        assert_eq!(cfg.channels.len(), 14);
    }

    #[test]
    fn overlapping_subwindows_rejected() {
        let cfg = FeatureConfig { subwindows_ms: vec![(0.0, 200.0), (100.0, 300.0)], ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ratio_terms() {
        let p = [1.0, 1.0, 2.0, 1.0, 1.0];
        let (n, d) = BandRatio::GammaAlpha.terms(&p);
        assert_eq!(n / d, 0.5);
        let (n, d) = BandRatio::SlowFast.terms(&p);
        assert_eq!(n / d, 1.5);
    }
}
