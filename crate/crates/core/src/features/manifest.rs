use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BandRatio, FeatureConfig};
use super::TOTAL_SLOTS;

pub const MANIFEST_VERSION: &str = "nocisense-features/1";

/// What a per-channel slot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelFeature {
    BandPower(usize),
    /// (band, sub-window)
    SubBandPower(usize, usize),
    Ratio(BandRatio),
    Mean,
    Sd,
    Skewness,
    Kurtosis,
    ZeroCrossingRate,
    PeakToPeak,
    HjorthActivity,
    HjorthMobility,
    HjorthComplexity,
    SpectralEntropy,
    SampleEntropy,
    HiguchiFd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotSpec {
    Channel { channel: usize, feature: ChannelFeature },
    Coherence { pair: usize },
    PeakFrequency { band: usize },
    Bandwidth { band: usize },
    /// Levels 1..=L are details, L + 1 the level-L approximation.
    DwtMav { level: usize },
    Pad,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slot: usize,
    pub feature: String,
    pub target: String,
    pub detail: String,
}

/// Ordered slot table of the canonical feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: String,
    pub channels: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    pub specs: Vec<SlotSpec>,
    /// Slot count before canonicalisation to 537.
    pub native_slots: usize,
    pub truncated: bool,
    pub content_hash: String,
}

fn window_label(w: (f64, f64)) -> String {
    format!("{}-{}ms", w.0, w.1)
}

impl FeatureManifest {
    pub fn build(cfg: &FeatureConfig) -> Self {
        let bands = &cfg.bands;
        let n_sub = cfg.subwindows_ms.len();
        let mut native: Vec<(SlotSpec, ManifestEntry)> = Vec::new();
        let mut push = |spec: SlotSpec, feature: &str, target: &str, detail: String| {
            let slot = native.len();
            native.push((spec, ManifestEntry { slot, feature: feature.into(), target: target.into(), detail }));
        };
        for (ci, ch) in cfg.channels.iter().enumerate() {
            let chf = |feature| SlotSpec::Channel { channel: ci, feature };
            for (bi, b) in bands.iter().enumerate() {
                push(chf(ChannelFeature::BandPower(bi)), "band_power", ch, b.name.as_str().into());
            }
            for (bi, b) in bands.iter().enumerate() {
                for wi in 0..n_sub {
                    push(
                        chf(ChannelFeature::SubBandPower(bi, wi)),
                        "subwindow_band_power",
                        ch,
                        format!("{}@{}", b.name.as_str(), window_label(cfg.subwindows_ms[wi])),
                    );
                }
            }
            for r in BandRatio::ALL {
                push(chf(ChannelFeature::Ratio(r)), "band_ratio", ch, r.as_str().into());
            }
            for (f, name) in [
                (ChannelFeature::Mean, "mean"),
                (ChannelFeature::Sd, "sd"),
                (ChannelFeature::Skewness, "skewness"),
                (ChannelFeature::Kurtosis, "kurtosis"),
                (ChannelFeature::ZeroCrossingRate, "zero_crossing_rate"),
                (ChannelFeature::PeakToPeak, "peak_to_peak"),
                (ChannelFeature::HjorthActivity, "hjorth_activity"),
                (ChannelFeature::HjorthMobility, "hjorth_mobility"),
                (ChannelFeature::HjorthComplexity, "hjorth_complexity"),
                (ChannelFeature::SpectralEntropy, "spectral_entropy"),
                (ChannelFeature::SampleEntropy, "sample_entropy"),
                (ChannelFeature::HiguchiFd, "higuchi_fd"),
            ] {
                push(chf(f), name, ch, String::new());
            }
        }
        for (pi, (a, b)) in cfg.coherence_pairs.iter().enumerate() {
            push(
                SlotSpec::Coherence { pair: pi },
                "coherence",
                &format!("{a}-{b}"),
                format!("{}-{}Hz", cfg.coherence_band_hz.0, cfg.coherence_band_hz.1),
            );
        }
        for (bi, b) in bands.iter().enumerate() {
            push(SlotSpec::PeakFrequency { band: bi }, "peak_frequency", "mean", b.name.as_str().into());
            push(SlotSpec::Bandwidth { band: bi }, "bandwidth_3db", "mean", b.name.as_str().into());
        }
        for level in 1..=cfg.dwt_levels + 1 {
            let detail = if level <= cfg.dwt_levels { format!("d{level}") } else { format!("a{}", cfg.dwt_levels) };
            push(SlotSpec::DwtMav { level }, "dwt_mav", "mean", detail);
        }
        let native_slots = native.len();
        let truncated = native_slots > TOTAL_SLOTS;
        native.truncate(TOTAL_SLOTS);
        while native.len() < TOTAL_SLOTS {
            let slot = native.len();
            native.push((SlotSpec::Pad, ManifestEntry { slot, feature: "pad".into(), target: "-".into(), detail: String::new() }));
        }
        let (specs, entries): (Vec<_>, Vec<_>) = native.into_iter().unzip();
        let mut m = FeatureManifest {
            version: MANIFEST_VERSION.into(),
            channels: cfg.channels.clone(),
            entries,
            specs,
            native_slots,
            truncated,
            content_hash: String::new(),
        };
        m.content_hash = m.compute_hash(cfg);
        m
    }

    /// SHA-256 over the layout only: Welch settings and other estimator
    /// parameters are excluded so offline models accept streaming vectors.
    fn compute_hash(&self, cfg: &FeatureConfig) -> String {
        let mut canon = String::new();
        let _ = writeln!(canon, "version={}", self.version);
        let _ = writeln!(canon, "channels={}", cfg.channels.join(","));
        for b in &cfg.bands {
            let _ = writeln!(canon, "band={}:{}:{}", b.name.as_str(), b.lo_hz, b.hi_hz);
        }
        for w in &cfg.subwindows_ms {
            let _ = writeln!(canon, "subwindow={}", window_label(*w));
        }
        for r in BandRatio::ALL {
            let _ = writeln!(canon, "ratio={}", r.as_str());
        }
        for (a, b) in &cfg.coherence_pairs {
            let _ = writeln!(canon, "pair={a}-{b}");
        }
        let _ = writeln!(canon, "dwt_levels={}", cfg.dwt_levels);
        canon.push_str(&self.entries_text());
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn entries_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", e.slot, e.feature, e.target, e.detail);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Human-readable export: comment header then one tab-separated line per slot.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# version: {}", self.version);
        let _ = writeln!(s, "# content_hash: {}", self.content_hash);
        let _ = writeln!(s, "# channels: {}", self.channels.join(","));
        let _ = writeln!(s, "# native_slots: {}", self.native_slots);
        let _ = writeln!(s, "# truncated: {}", self.truncated);
        let _ = writeln!(s, "slot\tfeature\ttarget\tdetail");
        s.push_str(&self.entries_text());
        s
    }

    /// Indices of slots that depend on the named channel.
    pub fn slots_for_channel(&self, name: &str) -> Vec<usize> {
        self.entries.iter().filter(|e| e.target == name).map(|e| e.slot).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_census() {
        let m = FeatureManifest::build(&FeatureConfig::offline());
        assert_eq!(m.len(), TOTAL_SLOTS);
        assert_eq!(m.native_slots, 535);
        assert!(!m.truncated);
        assert_eq!(m.specs.iter().filter(|s| matches!(s, SlotSpec::Pad)).count(), 2);
        assert_eq!(m.slots_for_channel("C4").len(), 37);
        assert_eq!(m.content_hash.len(), 64);
    }

    #[test]
    fn welch_settings_do_not_change_hash() {
        let a = FeatureManifest::build(&FeatureConfig::offline());
        let b = FeatureManifest::build(&FeatureConfig::realtime());
        assert_eq!(a.content_hash, b.content_hash);
    }

    #[test]
    fn channel_order_changes_hash() {
        let mut cfg = FeatureConfig::offline();
        cfg.channels.swap(0, 1);
        assert_ne!(FeatureManifest::build(&cfg).content_hash, FeatureManifest::build(&FeatureConfig::offline()).content_hash);
    }

    #[test]
    fn large_montage_is_truncated() {
        let mut cfg = FeatureConfig::offline();
        cfg.channels = (0..20).map(|i| format!("E{i}")).collect();
        let m = FeatureManifest::build(&cfg);
        assert!(m.truncated);
        assert_eq!(m.native_slots, 20 * 37 + 17);
        assert_eq!(m.len(), TOTAL_SLOTS);
    }
}
