use std::collections::HashMap;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::complexity::{higuchi_fd, sample_entropy};
use super::config::{BandName, FeatureConfig};
use super::dwt::dwt_energies;
use super::manifest::{ChannelFeature, FeatureManifest, SlotSpec};
use super::spectral::{
    band_clipped, band_power, band_ratios, coherence, peak_frequency, spectral_entropy, subwindow_band_powers,
};
use super::time::{hjorth, time_stats};
use super::{FeatureError, FeatureFlags, FeatureMatrix, FeatureVector};
use crate::dsp::spectral::{welch_psd, Spectrum, WelchParams};
use crate::ingest::{Epoch, EpochSet};

struct ChannelResult {
    band_power: Vec<f64>,
    sub_power: Vec<f64>,
    ratios: [f64; 5],
    stats: [f64; 6],
    hjorth: [f64; 3],
    spectral_entropy: f64,
    sample_entropy: f64,
    higuchi: f64,
    dwt: Vec<f64>,
    spectrum: Spectrum,
    flags: u32,
}

impl ChannelResult {
    fn get(&self, f: ChannelFeature, n_sub: usize) -> f64 {
        match f {
            ChannelFeature::BandPower(b) => self.band_power[b],
            ChannelFeature::SubBandPower(b, w) => self.sub_power[b * n_sub + w],
            ChannelFeature::Ratio(r) => self.ratios[r as usize],
            ChannelFeature::Mean => self.stats[0],
            ChannelFeature::Sd => self.stats[1],
            ChannelFeature::Skewness => self.stats[2],
            ChannelFeature::Kurtosis => self.stats[3],
            ChannelFeature::ZeroCrossingRate => self.stats[4],
            ChannelFeature::PeakToPeak => self.stats[5],
            ChannelFeature::HjorthActivity => self.hjorth[0],
            ChannelFeature::HjorthMobility => self.hjorth[1],
            ChannelFeature::HjorthComplexity => self.hjorth[2],
            ChannelFeature::SpectralEntropy => self.spectral_entropy,
            ChannelFeature::SampleEntropy => self.sample_entropy,
            ChannelFeature::HiguchiFd => self.higuchi,
        }
    }
}

/// A manifest plus the configuration it was built from.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    manifest: FeatureManifest,
    /// Manifest channels that own at least one slot after truncation.
    live_channels: Vec<bool>,
    globals_live: bool,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let manifest = FeatureManifest::build(&cfg);
        let mut live_channels = vec![false; cfg.channels.len()];
        let mut globals_live = false;
        for s in &manifest.specs {
            match s {
                SlotSpec::Channel { channel, .. } => live_channels[*channel] = true,
                SlotSpec::Pad => {}
                _ => globals_live = true,
            }
        }
        Ok(FeatureExtractor { cfg, manifest, live_channels, globals_live })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &FeatureManifest {
        &self.manifest
    }

    pub fn manifest_hash(&self) -> &str {
        &self.manifest.content_hash
    }

    /// Errors unless this extractor produces vectors for `expected`.
    pub fn expect_hash(&self, expected: &str) -> Result<(), FeatureError> {
        if self.manifest.content_hash != expected {
            return Err(FeatureError::ManifestMismatch {
                expected: expected.to_string(),
                got: self.manifest.content_hash.clone(),
            });
        }
        Ok(())
    }

    fn channel(&self, x: &[f64], fs: f64) -> Result<ChannelResult, FeatureError> {
        let cfg = &self.cfg;
        let mut flags = 0u32;
        let spectrum = welch_psd(x, fs, &cfg.welch.params(fs))?;
        let mut band_power_v = Vec::with_capacity(cfg.bands.len());
        for b in &cfg.bands {
            if band_clipped(b, fs) && b.name == BandName::Gamma {
                flags |= FeatureFlags::GAMMA_CLIPPED;
            }
            band_power_v.push(band_power(&spectrum.freqs, &spectrum.psd, b)?);
        }
        let sub_power = subwindow_band_powers(x, fs, &cfg.bands, &cfg.subwindows_ms, cfg.subwindow_nfft)?;
        let p5: [f64; 5] = band_power_v[..5].try_into().expect("five bands");
        let (ratios, floored) = band_ratios(&p5);
        if floored {
            flags |= FeatureFlags::RATIO_FLOORED;
        }
        let ts = time_stats(x, fs)?;
        let (hj, hj_flat) = hjorth(x)?;
        if ts.degenerate || hj_flat {
            flags |= FeatureFlags::ZERO_VARIANCE;
        }
        let (lo, hi) = cfg.entropy_band_hz;
        let in_band: Vec<f64> = spectrum
            .freqs
            .iter()
            .zip(&spectrum.psd)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, p)| *p)
            .collect();
        let (sp_ent, zero_psd) = spectral_entropy(&in_band);
        if zero_psd {
            flags |= FeatureFlags::ZERO_PSD;
        }
        let (sampen, undefined) = sample_entropy(x, cfg.sampen_m, cfg.sampen_r_factor)?;
        if undefined {
            flags |= FeatureFlags::SAMPEN_UNDEFINED;
        }
        let (hfd, degenerate) = higuchi_fd(x, cfg.higuchi_kmax)?;
        if degenerate {
            flags |= FeatureFlags::HIGUCHI_DEGENERATE;
        }
        let dwt = if self.globals_live { dwt_energies(x, cfg.dwt_levels)? } else { Vec::new() };
        Ok(ChannelResult {
            band_power: band_power_v,
            sub_power,
            ratios,
            stats: ts.to_array(),
            hjorth: hj,
            spectral_entropy: sp_ent,
            sample_entropy: sampen,
            higuchi: hfd,
            dwt,
            spectrum,
            flags,
        })
    }

    /// Vector for one multichannel window. `names` label the rows of
    /// `samples`; rows with `usable[i] == false` and manifest channels absent
    /// from `names` leave their slots NaN and marked imputed.
    pub fn extract_window(
        &self,
        samples: ArrayView2<'_, f64>,
        names: &[String],
        usable: &[bool],
        fs: f64,
    ) -> Result<FeatureVector, FeatureError> {
        let lookup: HashMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.to_ascii_lowercase(), i)).collect();
        let source: Vec<Option<usize>> = self
            .cfg
            .channels
            .iter()
            .map(|c| lookup.get(&c.to_ascii_lowercase()).copied().filter(|&i| usable.get(i).copied().unwrap_or(true)))
            .collect();
        let needed: Vec<usize> = (0..self.cfg.channels.len())
            .filter(|&ci| source[ci].is_some() && (self.live_channels[ci] || self.globals_live))
            .collect();
        let computed: Vec<(usize, ChannelResult)> = needed
            .par_iter()
            .map(|&ci| {
                let row = samples.row(source[ci].expect("filtered"));
                let x: Vec<f64> = row.iter().copied().collect();
                self.channel(&x, fs).map(|r| (ci, r))
            })
            .collect::<Result<_, _>>()?;
        let mut results: Vec<Option<ChannelResult>> = (0..self.cfg.channels.len()).map(|_| None).collect();
        let mut flags = FeatureFlags::default();
        if self.manifest.truncated {
            flags.set(FeatureFlags::TRUNCATED);
        }
        for (ci, r) in computed {
            flags.set(r.flags);
            results[ci] = Some(r);
        }
        let present: Vec<&ChannelResult> = results.iter().flatten().collect();

        // channel-mean spectrum for the peak / bandwidth slots
        let mean_spectrum = present.first().map(|first| {
            let mut psd = vec![0.0; first.spectrum.psd.len()];
            for r in &present {
                psd.iter_mut().zip(&r.spectrum.psd).for_each(|(a, b)| *a += b);
            }
            psd.iter_mut().for_each(|a| *a /= present.len() as f64);
            Spectrum { freqs: first.spectrum.freqs.clone(), psd }
        });
        let mean_dwt: Option<Vec<f64>> = present.first().filter(|_| self.globals_live).map(|first| {
            let mut acc = vec![0.0; first.dwt.len()];
            for r in &present {
                acc.iter_mut().zip(&r.dwt).for_each(|(a, b)| *a += b);
            }
            acc.iter().map(|a| a / present.len() as f64).collect()
        });

        let n_sub = self.cfg.subwindows_ms.len();
        let mut values = Vec::with_capacity(self.manifest.len());
        let mut imputed = Vec::with_capacity(self.manifest.len());
        for spec in &self.manifest.specs {
            let v: Option<f64> = match *spec {
                SlotSpec::Channel { channel, feature } => results[channel].as_ref().map(|r| r.get(feature, n_sub)),
                SlotSpec::Coherence { pair } => {
                    let (a, b) = &self.cfg.coherence_pairs[pair];
                    let ia = lookup.get(&a.to_ascii_lowercase()).filter(|&&i| usable.get(i).copied().unwrap_or(true));
                    let ib = lookup.get(&b.to_ascii_lowercase()).filter(|&&i| usable.get(i).copied().unwrap_or(true));
                    match (ia, ib) {
                        (Some(&ia), Some(&ib)) => {
                            let x: Vec<f64> = samples.row(ia).iter().copied().collect();
                            let y: Vec<f64> = samples.row(ib).iter().copied().collect();
                            let seg = ((x.len() as f64) * self.cfg.coherence_segment_fraction).round() as usize;
                            let p = WelchParams {
                                segment_len: seg.max(2),
                                overlap: seg / 2,
                                nfft: seg.max(512).next_power_of_two(),
                            };
                            Some(coherence(&x, &y, fs, self.cfg.coherence_band_hz, &p)?)
                        }
                        _ => {
                            flags.set(FeatureFlags::COHERENCE_UNAVAILABLE);
                            None
                        }
                    }
                }
                SlotSpec::PeakFrequency { band } | SlotSpec::Bandwidth { band } => match &mean_spectrum {
                    Some(s) => {
                        let info = peak_frequency(&s.freqs, &s.psd, &self.cfg.bands[band])?;
                        if info.flat {
                            flags.set(FeatureFlags::FLAT_PEAK);
                        }
                        Some(if matches!(spec, SlotSpec::PeakFrequency { .. }) { info.peak_hz } else { info.bandwidth_hz })
                    }
                    None => None,
                },
                SlotSpec::DwtMav { level } => mean_dwt.as_ref().map(|d| d[level - 1]),
                SlotSpec::Pad => {
                    values.push(0.0);
                    imputed.push(true);
                    continue;
                }
            };
            imputed.push(v.is_none());
            values.push(v.unwrap_or(f64::NAN));
        }
        Ok(FeatureVector {
            values,
            imputed_mask: imputed,
            manifest_hash: self.manifest.content_hash.clone(),
            label: None,
            subject_id: String::new(),
            flags,
        })
    }

    pub fn extract_epoch(&self, epoch: &Epoch, names: &[String]) -> Result<FeatureVector, FeatureError> {
        let mut v = self.extract_window(epoch.samples.view(), names, &epoch.channel_mask, epoch.fs_hz)?;
        v.label = Some(epoch.label);
        v.subject_id = epoch.subject_id.clone();
        Ok(v)
    }
}

/// Builds the manifest for `cfg`, checks it against `manifest`, and extracts.
pub fn extract_features(
    epoch: &Epoch,
    names: &[String],
    cfg: &FeatureConfig,
    manifest: &FeatureManifest,
) -> Result<FeatureVector, FeatureError> {
    let ex = FeatureExtractor::new(cfg.clone())?;
    ex.expect_hash(&manifest.content_hash)?;
    ex.extract_epoch(epoch, names)
}

/// Feature matrix of every epoch in the set, in order.
pub fn extract_all(set: &EpochSet, ex: &FeatureExtractor) -> Result<FeatureMatrix, FeatureError> {
    let vectors: Vec<FeatureVector> =
        set.epochs.par_iter().map(|e| ex.extract_epoch(e, &set.channel_names)).collect::<Result<_, _>>()?;
    FeatureMatrix::from_vectors(&vectors, ex.manifest_hash())
}
