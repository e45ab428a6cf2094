use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dsp::resample::PolyphaseResampler;
use crate::features::{FeatureConfig, FeatureError, FeatureExtractor, FeatureFlags, FeatureVector, TOTAL_SLOTS};
use crate::models::TrainedModel;
use crate::preprocess::{bandpass_notch_zero_phase, channel_statistics, robust_z, FilterSpec};

use super::ring::Snapshot;
use super::RealtimeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontEndConfig {
    pub target_rate_hz: f64,
    pub window_seconds: f64,
    pub filter: FilterSpec,
    /// Reflection padding for the zero-phase filters, in output samples.
    pub filter_pad: usize,
    /// Ticks of channel statistics behind the running median.
    pub mask_history: usize,
    pub mask_z: f64,
    pub average_reference: bool,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            target_rate_hz: 500.0,
            window_seconds: 1.0,
            filter: FilterSpec::realtime(),
            filter_pad: 250,
            mask_history: 10,
            mask_z: 3.0,
            average_reference: true,
        }
    }
}

/// Window variance (µV²) at or below which a channel counts as flatlined.
pub const FLAT_VARIANCE: f64 = 1e-12;

/// Running-median channel masking: each tick's per-channel variance and
/// mean |correlation| enter a bounded history; a channel is masked when the
/// robust z of its median statistic exceeds the threshold, or immediately
/// when its current window is flat or holds non-finite samples.
#[derive(Debug, Clone)]
pub struct MaskTracker {
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
    z: f64,
}

impl MaskTracker {
    pub fn new(capacity: usize, z: f64) -> Self {
        MaskTracker { history: VecDeque::with_capacity(capacity), capacity: capacity.max(1), z }
    }

    /// Records one filtered window and returns the usable mask.
    pub fn update(&mut self, window: ArrayView2<'_, f64>, non_finite: &[bool]) -> Vec<bool> {
        let c = window.nrows();
        let stats = channel_statistics(window);
        let flat: Vec<bool> = stats.variance.iter().map(|&v| v <= FLAT_VARIANCE).collect();
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((stats.variance, stats.mean_abs_correlation));
        let med = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<f64> {
            (0..c)
                .map(|ch| {
                    let v: Vec<f64> = self.history.iter().map(|h| pick(h)[ch]).collect();
                    crate::dsp::median(&v)
                })
                .collect()
        };
        let zv = robust_z(&med(|h| &h.0));
        let zc = robust_z(&med(|h| &h.1));
        (0..c).map(|ch| !non_finite[ch] && !flat[ch] && zv[ch].abs() <= self.z && zc[ch].abs() <= self.z).collect()
    }
}

/// Subtracts the mean of usable channels from every usable channel.
pub fn average_reference(samples: &mut Array2<f64>, usable: &[bool]) {
    let idx: Vec<usize> = (0..samples.nrows()).filter(|&i| usable[i]).collect();
    if idx.is_empty() {
        return;
    }
    let n = samples.ncols();
    let mut mean = vec![0.0; n];
    for &i in &idx {
        mean.iter_mut().zip(samples.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
    for &i in &idx {
        samples.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub resample: u64,
    /// Band-pass, notch, channel masking and re-referencing.
    pub filter: u64,
    pub features: u64,
    pub standardize: u64,
    pub infer: u64,
    pub total: u64,
}

/// Output of the signal front end for one window.
#[derive(Debug, Clone)]
pub struct WindowFeatures {
    pub vector: FeatureVector,
    pub usable: Vec<bool>,
    pub latency: StageLatency,
}

fn micros(d: Duration) -> u64 {
    d.as_micros() as u64
}

/// Window → resample → zero-phase filter → mask → reference → features.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub cfg: FrontEndConfig,
    extractor: Arc<FeatureExtractor>,
    resampler: PolyphaseResampler,
    source_rate_hz: f64,
    names: Vec<String>,
    masks: MaskTracker,
    /// Test hook: extra delay inside the feature stage.
    pub feature_delay: Option<Duration>,
}

impl FrontEnd {
    pub fn new(cfg: FrontEndConfig, features: FeatureConfig, names: Vec<String>, source_rate_hz: f64) -> Result<Self, RealtimeError> {
        cfg.filter.validate(cfg.target_rate_hz).map_err(|e| RealtimeError::Config(e.to_string()))?;
        let extractor = Arc::new(FeatureExtractor::new(features)?);
        Ok(FrontEnd {
            resampler: PolyphaseResampler::new(source_rate_hz, cfg.target_rate_hz),
            masks: MaskTracker::new(cfg.mask_history, cfg.mask_z),
            cfg,
            extractor,
            source_rate_hz,
            names,
            feature_delay: None,
        })
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn channel_names(&self) -> &[String] {
        &self.names
    }

    pub fn source_rate_hz(&self) -> f64 {
        self.source_rate_hz
    }

    /// Window length at the source rate.
    pub fn window_samples(&self) -> usize {
        (self.cfg.window_seconds * self.source_rate_hz).round() as usize
    }

    pub fn reset(&mut self) {
        self.masks = MaskTracker::new(self.cfg.mask_history, self.cfg.mask_z);
    }

    /// Resampled window at the target rate; non-finite samples become 0 and
    /// their channels are reported.
    pub fn resample(&self, window: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<bool>) {
        let non_finite: Vec<bool> = window.axis_iter(Axis(0)).map(|r| r.iter().any(|v| !v.is_finite())).collect();
        let rows: Vec<Vec<f64>> = window
            .axis_iter(Axis(0))
            .map(|r| {
                let x: Vec<f64> = r.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
                if self.resampler.is_identity() {
                    x
                } else {
                    self.resampler.process(&x)
                }
            })
            .collect();
        let n = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        (Array2::from_shape_vec((window.nrows(), n), flat).expect("equal lengths"), non_finite)
    }

    pub fn filter(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (mut o, r) in out.axis_iter_mut(Axis(0)).zip(x.axis_iter(Axis(0))) {
            let v: Vec<f64> = r.iter().copied().collect();
            let y = bandpass_notch_zero_phase(&v, self.cfg.target_rate_hz, &self.cfg.filter, self.cfg.filter_pad);
            o.iter_mut().zip(y).for_each(|(a, b)| *a = b);
        }
        out
    }

    /// Runs every stage on a source-rate window (channels × samples).
    pub fn process(&mut self, window: ArrayView2<'_, f64>, partial: bool) -> Result<WindowFeatures, FeatureError> {
        let t0 = Instant::now();
        let (resampled, non_finite) = self.resample(window);
        let t1 = Instant::now();
        let mut filtered = self.filter(&resampled);
        let usable = self.masks.update(filtered.view(), &non_finite);
        if self.cfg.average_reference {
            average_reference(&mut filtered, &usable);
        }
        let t2 = Instant::now();
        if let Some(d) = self.feature_delay {
            std::thread::sleep(d);
        }
        let mut vector = self.extractor.extract_window(filtered.view(), &self.names, &usable, self.cfg.target_rate_hz)?;
        if partial {
            vector.flags.set(FeatureFlags::PARTIAL_WINDOW);
        }
        let t3 = Instant::now();
        let latency = StageLatency {
            resample: micros(t1 - t0),
            filter: micros(t2 - t1),
            features: micros(t3 - t2),
            ..Default::default()
        };
        Ok(WindowFeatures { vector, usable, latency })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEvent {
    pub seq: u64,
    /// Seconds since the loop started, on the loop's monotonic clock.
    pub t: f64,
    /// Wall-clock time, seconds since the Unix epoch.
    pub wall: f64,
    pub window_end: u64,
    pub p: f64,
    pub label: String,
    pub threshold: f64,
    pub latency_us: StageLatency,
    pub masked: Vec<String>,
    pub flags: Vec<String>,
    /// `"padded"` or `"truncated"` when the native slot count differs from
    /// the canonical one.
    pub pad_truncate: Option<String>,
    pub error: Option<String>,
    /// The vector behind `p`, kept only when the pipeline captures features.
    #[serde(skip)]
    pub features: Option<FeatureVector>,
}

impl PredictionEvent {
    pub fn is_partial(&self) -> bool {
        self.flags.iter().any(|f| f == "partial_window")
    }

    pub fn is_stale(&self) -> bool {
        self.flags.iter().any(|f| f == "stale_probability")
    }
}

/// Front end plus model: one call per tick.
#[derive(Debug, Clone)]
pub struct TickPipeline {
    pub front: FrontEnd,
    model: Arc<TrainedModel>,
    pub threshold: f64,
    last_good: Option<f64>,
    seq: u64,
    pad_truncate: Option<String>,
    /// Attach each tick's feature vector to its event.
    pub capture_features: bool,
}

fn wall_now() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl TickPipeline {
    pub fn new(front: FrontEnd, model: Option<Arc<TrainedModel>>, threshold: f64) -> Result<Self, RealtimeError> {
        let model = model.ok_or(RealtimeError::ModelMissing)?;
        model.check_manifest(front.extractor().manifest_hash())?;
        let m = front.extractor().manifest();
        let pad_truncate = match m.native_slots.cmp(&TOTAL_SLOTS) {
            std::cmp::Ordering::Less => Some("padded".to_string()),
            std::cmp::Ordering::Greater => Some("truncated".to_string()),
            std::cmp::Ordering::Equal => None,
        };
        Ok(TickPipeline { front, model, threshold, last_good: None, seq: 0, pad_truncate, capture_features: false })
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    /// Never fails: feature or model errors produce a flagged event that
    /// carries the last good probability.
    pub fn tick(&mut self, snap: &Snapshot, t: f64) -> PredictionEvent {
        let start = Instant::now();
        self.seq += 1;
        let mut flags: Vec<String> = Vec::new();
        let mut masked = Vec::new();
        let mut latency = StageLatency::default();
        let mut error = None;
        let mut features = None;
        let outcome = self.front.process(snap.samples.view(), snap.partial).map_err(|e| e.to_string()).and_then(|wf| {
            latency = wf.latency;
            masked = self.front.names.iter().zip(&wf.usable).filter(|(_, u)| !**u).map(|(n, _)| n.clone()).collect();
            flags.extend(wf.vector.flags.names().into_iter().map(String::from));
            let ts = Instant::now();
            let z = self.model.standardization.apply(&wf.vector.values).map_err(|e| e.to_string())?;
            let ti = Instant::now();
            let p = self.model.classifier.proba(ndarray::ArrayView1::from(&z));
            latency.standardize = micros(ti - ts);
            latency.infer = micros(ti.elapsed());
            if self.capture_features {
                features = Some(wf.vector);
            }
            if p.is_finite() {
                Ok(p)
            } else {
                Err("non-finite probability".to_string())
            }
        });
        let p = match outcome {
            Ok(p) => {
                self.last_good = Some(p);
                p
            }
            Err(e) => {
                flags.push("stale_probability".into());
                error = Some(e);
                self.last_good.unwrap_or(0.5)
            }
        };
        if snap.partial && !flags.iter().any(|f| f == "partial_window") {
            flags.push("partial_window".into());
        }
        latency.total = micros(start.elapsed());
        PredictionEvent {
            seq: self.seq,
            t,
            wall: wall_now(),
            window_end: snap.end_sample,
            p,
            label: if p >= self.threshold { "high_pain" } else { "low_pain" }.into(),
            threshold: self.threshold,
            latency_us: latency,
            masked,
            flags,
            pad_truncate: self.pad_truncate.clone(),
            error,
            features,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn reference_removes_common_signal() {
        let mut x = array![[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]];
        average_reference(&mut x, &[true, true, false]);
        assert_eq!(x, array![[-1.0, -1.0], [1.0, 1.0], [100.0, 100.0]]);
    }

    #[test]
    fn non_finite_channel_is_masked_at_once() {
        let mut m = MaskTracker::new(10, 3.0);
        let w = Array2::from_shape_fn((5, 100), |(c, t)| ((t * (c + 3)) as f64 * 0.1).sin());
        let u = m.update(w.view(), &[false, true, false, false, false]);
        assert_eq!(u, vec![true, false, true, true, true]);
    }

    #[test]
    fn flat_channel_is_masked_at_once() {
        let mut m = MaskTracker::new(10, 3.0);
        let w = Array2::from_shape_fn((4, 100), |(c, t)| if c == 1 { 5.0 } else { ((t * (c + 2)) as f64 * 0.1).sin() });
        assert_eq!(m.update(w.view(), &[false; 4]), vec![true, false, true, true]);
    }

    #[test]
    fn loud_channel_is_masked() {
        let mut m = MaskTracker::new(10, 3.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = Array2::from_shape_fn((8, 200), |(c, t)| {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            if c == 2 {
                50.0 * noise
            } else {
                (1.0 + 0.1 * c as f64) * (t as f64 * 0.3).sin() + (0.3 + 0.05 * c as f64) * noise
            }
        });
        let u = m.update(w.view(), &[false; 8]);
        assert!(!u[2]);
        assert_eq!(u.iter().filter(|&&x| !x).count(), 1);
    }
}
