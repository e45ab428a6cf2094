//! Synthetic EEG with planted pain signatures.
//!
//! Each channel is 1/f background noise plus alpha and theta rhythms whose
//! amplitude depends on scalp position. High-pain windows carry three
//! effects: alpha suppression at one channel, a theta boost at another and a
//! stimulus-locked low-gamma burst at a third. Subjects differ in overall
//! gain, alpha frequency and effect strength.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::features::manifest::{ChannelFeature, SlotSpec};
use crate::features::{BandName, FeatureConfig, FeatureManifest};
use crate::ingest::{Epoch, EpochSet, PainLabel};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub epochs_per_class_per_subject: usize,
    pub fs_hz: f64,
    pub epoch_seconds: f64,
    pub channels: Vec<String>,
    pub alpha_channel: String,
    pub theta_channel: String,
    pub gamma_channel: String,
    /// Fraction of alpha amplitude removed at `alpha_channel` in high pain.
    pub alpha_suppression: f64,
    /// Added theta amplitude (µV) at `theta_channel`.
    pub theta_boost_uv: f64,
    /// Peak amplitude (µV) of the gamma burst at `gamma_channel`.
    pub gamma_burst_uv: f64,
    /// Burst centre after each stimulus (s).
    pub gamma_burst_at_s: f64,
    pub gamma_burst_width_s: f64,
    /// RMS of the 1/f background (µV).
    pub background_uv: f64,
    /// Peak alpha amplitude (µV) at the strongest (occipital) sites.
    pub alpha_uv: f64,
    pub theta_uv: f64,
    /// SD of the log overall gain across subjects.
    pub subject_gain_sd: f64,
    /// SD of the log effect strength across subjects.
    pub effect_sd: f64,
    /// SD of the log rhythm amplitude from window to window.
    pub trial_jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 12,
            epochs_per_class_per_subject: 40,
            fs_hz: 500.0,
            epoch_seconds: 4.0,
            channels: crate::features::config::DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            alpha_channel: "C4".into(),
            theta_channel: "Cz".into(),
            gamma_channel: "FCz".into(),
            alpha_suppression: 0.40,
            theta_boost_uv: 2.9,
            gamma_burst_uv: 6.9,
            gamma_burst_at_s: 0.2,
            gamma_burst_width_s: 0.04,
            background_uv: 10.0,
            alpha_uv: 12.0,
            theta_uv: 3.0,
            subject_gain_sd: 0.25,
            effect_sd: 0.35,
            trial_jitter: 0.35,
            seed: 20_240_617,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.n_subjects == 0 || self.epochs_per_class_per_subject == 0 {
            return bad("need at least one subject and one epoch per class");
        }
        if !(self.fs_hz > 0.0 && self.epoch_seconds > 0.0) {
            return bad("sampling rate and epoch length must be positive");
        }
        let effects = [
            self.alpha_suppression,
            self.theta_boost_uv,
            self.gamma_burst_uv,
            self.background_uv,
            self.alpha_uv,
            self.theta_uv,
            self.subject_gain_sd,
            self.effect_sd,
            self.trial_jitter,
        ];
        if effects.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("effect sizes and noise levels must be finite and non-negative");
        }
        if self.alpha_suppression > 1.0 {
            return bad("alpha_suppression is a fraction in [0, 1]");
        }
        for ch in [&self.alpha_channel, &self.theta_channel, &self.gamma_channel] {
            if !self.channels.iter().any(|c| c.eq_ignore_ascii_case(ch)) {
                return bad(&format!("effect channel {ch} is not in the channel list"));
            }
        }
        Ok(())
    }

    pub fn with_effects(mut self, scale: f64) -> Self {
        self.alpha_suppression = (self.alpha_suppression * scale).min(1.0);
        self.theta_boost_uv *= scale;
        self.gamma_burst_uv *= scale;
        self
    }

    pub fn subject_id(&self, s: usize) -> String {
        format!("synth{:02}", s + 1)
    }

    fn channel_index(&self, name: &str) -> usize {
        self.channels.iter().position(|c| c.eq_ignore_ascii_case(name)).expect("validated")
    }
}

/// Relative alpha amplitude by scalp region.
fn alpha_weight(name: &str) -> f64 {
    let n = name.to_ascii_uppercase();
    if n.starts_with('O') {
        1.0
    } else if n.starts_with('P') {
        0.8
    } else if n.starts_with('C') || n.starts_with('T') {
        0.6
    } else if n.starts_with("FP") {
        0.3
    } else {
        0.4
    }
}

// Three-pole 1/f approximation driven by white noise.
const PINK_POLES: [f64; 3] = [0.99765, 0.96300, 0.57000];
const PINK_GAINS: [f64; 3] = [0.0990460, 0.2965164, 1.0526913];
const PINK_DIRECT: f64 = 0.1848;

fn pink_unit_scale() -> f64 {
    let mut var = PINK_DIRECT * PINK_DIRECT;
    for i in 0..3 {
        var += 2.0 * PINK_DIRECT * PINK_GAINS[i];
        for j in 0..3 {
            var += PINK_GAINS[i] * PINK_GAINS[j] / (1.0 - PINK_POLES[i] * PINK_POLES[j]);
        }
    }
    1.0 / var.sqrt()
}

#[derive(Debug, Clone)]
struct ChannelState {
    pink: [f64; 3],
    alpha_phase: f64,
    theta_phase: f64,
    gamma_phase: f64,
}

/// Per-subject constants drawn once from the seed.
#[derive(Debug, Clone)]
struct SubjectProfile {
    gain: f64,
    alpha_hz: f64,
    theta_hz: f64,
    gamma_hz: f64,
    effect: [f64; 3],
}

impl SubjectProfile {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut lognormal = |sd: f64| (sd * rng.sample::<f64, _>(StandardNormal)).exp();
        let gain = lognormal(cfg.subject_gain_sd);
        let effect = [lognormal(cfg.effect_sd), lognormal(cfg.effect_sd), lognormal(cfg.effect_sd)];
        SubjectProfile {
            gain,
            effect,
            alpha_hz: rng.random_range(9.0..11.5),
            theta_hz: rng.random_range(5.0..7.0),
            gamma_hz: rng.random_range(36.0..44.0),
        }
    }
}

/// Continuous multichannel generator for one subject. Window-level
/// amplitude jitter is redrawn every `block` samples.
#[derive(Debug, Clone)]
pub struct SubjectSignal {
    cfg: SynthConfig,
    fs: f64,
    profile: SubjectProfile,
    state: Vec<ChannelState>,
    jitter: Vec<[f64; 3]>,
    rng: ChaCha8Rng,
    pink_scale: f64,
    idx: [usize; 3],
    block: u64,
    /// Samples emitted so far.
    pub position: u64,
}

impl SubjectSignal {
    pub fn new(cfg: &SynthConfig, subject: usize, fs: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(subject as u64 + 1);
        let profile = SubjectProfile::draw(cfg, &mut rng);
        let state = (0..cfg.channels.len())
            .map(|_| ChannelState {
                pink: [0.0; 3],
                alpha_phase: rng.random_range(0.0..TAU),
                theta_phase: rng.random_range(0.0..TAU),
                gamma_phase: rng.random_range(0.0..TAU),
            })
            .collect();
        let mut sig = SubjectSignal {
            cfg: cfg.clone(),
            fs,
            profile,
            state,
            jitter: vec![[1.0; 3]; cfg.channels.len()],
            rng,
            pink_scale: pink_unit_scale(),
            idx: [cfg.channel_index(&cfg.alpha_channel), cfg.channel_index(&cfg.theta_channel), cfg.channel_index(&cfg.gamma_channel)],
            block: fs.round().max(1.0) as u64,
            position: 0,
        };
        sig.redraw_jitter();
        sig.warm_up();
        sig
    }

    fn redraw_jitter(&mut self) {
        let sd = self.cfg.trial_jitter;
        for j in self.jitter.iter_mut() {
            for v in j.iter_mut() {
                *v = (sd * self.rng.sample::<f64, _>(StandardNormal)).exp();
            }
        }
    }

    fn warm_up(&mut self) {
        for _ in 0..1024 {
            for c in 0..self.state.len() {
                let w: f64 = self.rng.sample(StandardNormal);
                let st = &mut self.state[c];
                for k in 0..3 {
                    st.pink[k] = PINK_POLES[k] * st.pink[k] + PINK_GAINS[k] * w;
                }
            }
        }
    }

    /// Renders `n` samples. `high(t)` gives the pain state at sample time t
    /// (seconds since the generator started); `burst_phase(t)` gives the
    /// time since the most recent stimulus, which places the gamma burst.
    pub fn render(&mut self, n: usize, high: impl Fn(f64) -> bool, since_stimulus: impl Fn(f64) -> f64) -> Array2<f64> {
        let cfg = self.cfg.clone();
        let c = &cfg;
        let nch = c.channels.len();
        let weights: Vec<f64> = c.channels.iter().map(|n| alpha_weight(n)).collect();
        let mut out = Array2::zeros((nch, n));
        let dt = 1.0 / self.fs;
        let p = self.profile.clone();
        let (w_alpha, w_theta, w_gamma) = (TAU * p.alpha_hz * dt, TAU * p.theta_hz * dt, TAU * p.gamma_hz * dt);
        let two_w2 = 2.0 * c.gamma_burst_width_s * c.gamma_burst_width_s;
        for t in 0..n {
            if self.position > 0 && self.position % self.block == 0 {
                self.redraw_jitter();
            }
            let time = self.position as f64 * dt;
            let is_high = high(time);
            for ch in 0..nch {
                let w: f64 = self.rng.sample(StandardNormal);
                let phase_noise: f64 = self.rng.sample(StandardNormal);
                let st = &mut self.state[ch];
                let mut pink = PINK_DIRECT * w;
                for k in 0..3 {
                    st.pink[k] = PINK_POLES[k] * st.pink[k] + PINK_GAINS[k] * w;
                    pink += st.pink[k];
                }
                st.alpha_phase = (st.alpha_phase + w_alpha + 0.02 * phase_noise) % TAU;
                st.theta_phase = (st.theta_phase + w_theta + 0.02 * phase_noise) % TAU;
                st.gamma_phase = (st.gamma_phase + w_gamma) % TAU;
                let jit = self.jitter[ch];
                let mut alpha = c.alpha_uv * weights[ch] * jit[0];
                let mut theta = c.theta_uv * jit[1];
                let mut gamma = 0.0;
                if is_high {
                    if ch == self.idx[0] {
                        alpha *= (1.0 - c.alpha_suppression * p.effect[0]).max(0.0);
                    }
                    if ch == self.idx[1] {
                        theta += c.theta_boost_uv * p.effect[1] * jit[1];
                    }
                    if ch == self.idx[2] {
                        let dt_b = since_stimulus(time) - c.gamma_burst_at_s;
                        gamma = c.gamma_burst_uv * p.effect[2] * jit[2] * (-dt_b * dt_b / two_w2).exp();
                    }
                }
                let v = c.background_uv * self.pink_scale * pink
                    + alpha * st.alpha_phase.sin()
                    + theta * st.theta_phase.sin()
                    + gamma * st.gamma_phase.sin();
                out[[ch, t]] = p.gain * v;
            }
            self.position += 1;
        }
        out
    }
}

/// Balanced, seeded epoch set: per subject, `epochs_per_class_per_subject`
/// low and high epochs in a shuffled order, each from a fresh generator
/// state (a new stimulus).
pub fn synth_generate(cfg: &SynthConfig) -> Result<EpochSet, EvalError> {
    cfg.validate()?;
    let n = (cfg.epoch_seconds * cfg.fs_hz).round() as usize;
    let mut set = EpochSet::new(cfg.channels.clone());
    for s in 0..cfg.n_subjects {
        let mut sig = SubjectSignal::new(cfg, s, cfg.fs_hz);
        let mut order: Vec<bool> = (0..2 * cfg.epochs_per_class_per_subject).map(|i| i % 2 == 1).collect();
        // Fisher-Yates on the subject's own stream
        for i in (1..order.len()).rev() {
            let j = sig.rng.random_range(0..=i);
            order.swap(i, j);
        }
        let id = cfg.subject_id(s);
        for high in order {
            sig.redraw_jitter();
            let onset = sig.position;
            let t0 = onset as f64 / cfg.fs_hz;
            let samples = sig.render(n, |_| high, |t| t - t0);
            set.push(Epoch {
                subject_id: id.clone(),
                label: if high { PainLabel::HighPain } else { PainLabel::LowPain },
                onset_sample: onset,
                samples,
                fs_hz: cfg.fs_hz,
                channel_mask: vec![true; cfg.channels.len()],
            });
        }
    }
    Ok(set)
}

/// Slots that carry each planted signature: alpha power and alpha-referenced
/// ratios at the alpha channel; theta power and theta/alpha at the theta
/// channel; gamma power and gamma/alpha at the gamma channel. Band powers
/// include their sub-window variants.
pub fn planted_slots(manifest: &FeatureManifest, features: &FeatureConfig, cfg: &SynthConfig) -> [Vec<usize>; 3] {
    use crate::features::config::BandRatio;
    let find = |ch: &str, pred: &dyn Fn(&ChannelFeature) -> bool| -> Vec<usize> {
        manifest
            .specs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                SlotSpec::Channel { channel, feature } if manifest.channels[*channel].eq_ignore_ascii_case(ch) && pred(feature) => Some(i),
                _ => None,
            })
            .collect()
    };
    let band = |b: BandName| {
        let idx = features.bands.iter().position(|fb| fb.name == b);
        move |f: &ChannelFeature| matches!(f, ChannelFeature::BandPower(x) | ChannelFeature::SubBandPower(x, _) if Some(*x) == idx)
    };
    let ratio = |rs: &'static [BandRatio]| move |f: &ChannelFeature| matches!(f, ChannelFeature::Ratio(r) if rs.contains(r));
    let alpha = find(&cfg.alpha_channel, &|f| {
        band(BandName::Alpha)(f) || ratio(&[BandRatio::GammaAlpha, BandRatio::ThetaAlpha, BandRatio::BetaAlpha])(f)
    });
    let theta = find(&cfg.theta_channel, &|f| band(BandName::Theta)(f) || ratio(&[BandRatio::ThetaAlpha])(f));
    let gamma = find(&cfg.gamma_channel, &|f| band(BandName::Gamma)(f) || ratio(&[BandRatio::GammaAlpha])(f));
    [alpha, theta, gamma]
}

/// Pain-state timeline for a continuous synthetic stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSchedule {
    Constant { high: bool },
    /// Low until `at_s`, high afterwards.
    Onset { at_s: f64 },
    /// Alternating low then high blocks.
    Alternating { low_s: f64, high_s: f64 },
}

impl StateSchedule {
    pub fn is_high(&self, t: f64) -> bool {
        match *self {
            StateSchedule::Constant { high } => high,
            StateSchedule::Onset { at_s } => t >= at_s,
            StateSchedule::Alternating { low_s, high_s } => (t % (low_s + high_s)) >= low_s,
        }
    }
}

/// Continuous stream of one synthetic subject, delivered chunk by chunk.
/// In the high state a gamma burst follows every whole second.
#[derive(Debug, Clone)]
pub struct SynthStream {
    signal: SubjectSignal,
    pub schedule: StateSchedule,
    pub fs_hz: f64,
}

impl SynthStream {
    pub fn new(cfg: &SynthConfig, subject: usize, fs_hz: f64, schedule: StateSchedule) -> Result<Self, EvalError> {
        cfg.validate()?;
        Ok(SynthStream { signal: SubjectSignal::new(cfg, subject, fs_hz), schedule, fs_hz })
    }

    pub fn channel_names(&self) -> &[String] {
        &self.signal.cfg.channels
    }

    /// Samples delivered so far.
    pub fn position(&self) -> u64 {
        self.signal.position
    }

    pub fn is_high_at(&self, sample: u64) -> bool {
        self.schedule.is_high(sample as f64 / self.fs_hz)
    }

    pub fn next_chunk(&mut self, n: usize) -> Array2<f64> {
        let sched = self.schedule;
        self.signal.render(n, |t| sched.is_high(t), |t| t.fract())
    }
}
