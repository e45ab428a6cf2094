use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::Receiver;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::alert::{AlertState, AlertTransition};
use super::pipeline::{PredictionEvent, TickPipeline};
use super::ring::RingBuffer;
use super::source::{SourceChunk, StreamSource};
use super::RealtimeError;

/// Operator setting changes, applied at the next tick boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    SetThreshold { value: f64 },
    SetSustain { value: f64 },
    Pause,
    Resume,
}

impl ControlMessage {
    /// Parses and range-checks one JSON control message.
    pub fn parse(text: &str) -> Result<Self, RealtimeError> {
        let msg: ControlMessage =
            serde_json::from_str(text.trim()).map_err(|e| RealtimeError::Protocol(format!("bad control message: {e}")))?;
        match msg {
            ControlMessage::SetThreshold { value } if !(0.0..=1.0).contains(&value) => {
                Err(RealtimeError::Protocol(format!("threshold {value} outside [0, 1]")))
            }
            ControlMessage::SetSustain { value } if !(value.is_finite() && value >= 0.0) => {
                Err(RealtimeError::Protocol(format!("sustain {value} must be a non-negative number")))
            }
            m => Ok(m),
        }
    }
}

/// Settings in force, echoed to subscribers after every change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub threshold: f64,
    pub sustain: f64,
    pub paused: bool,
}

/// Everything the loop publishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PublishMessage {
    Prediction(PredictionEvent),
    Alert { active: bool, since: f64, t: f64 },
    Control(Settings),
    /// Messages dropped for this subscriber since its previous delivery.
    Gap { dropped: u64 },
    Error { message: String },
}

impl PublishMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("publish messages serialize")
    }
}

impl From<AlertTransition> for PublishMessage {
    fn from(t: AlertTransition) -> Self {
        PublishMessage::Alert { active: t.active, since: t.since, t: t.at }
    }
}

pub trait EventSink {
    fn publish(&mut self, msg: &PublishMessage);
}

impl<S: EventSink + ?Sized> EventSink for Box<S> {
    fn publish(&mut self, msg: &PublishMessage) {
        (**self).publish(msg)
    }
}

impl<S: EventSink> EventSink for Vec<S> {
    fn publish(&mut self, msg: &PublishMessage) {
        self.iter_mut().for_each(|s| s.publish(msg))
    }
}

/// Collects messages in memory.
#[derive(Debug, Default)]
pub struct VecSink(pub Vec<PublishMessage>);

impl EventSink for VecSink {
    fn publish(&mut self, msg: &PublishMessage) {
        self.0.push(msg.clone());
    }
}

/// Writes one JSON object per line.
pub struct JsonLinesSink<W: std::io::Write>(pub W);

impl<W: std::io::Write> EventSink for JsonLinesSink<W> {
    fn publish(&mut self, msg: &PublishMessage) {
        if let Err(e) = writeln!(self.0, "{}", msg.to_json()).and_then(|_| self.0.flush()) {
            log::warn!("event sink write failed: {e}");
        }
    }
}

/// Monotonic time source driving the tick schedule.
pub trait Clock {
    /// Seconds since the clock started.
    fn now(&self) -> f64;
    fn sleep_until(&mut self, t: f64);
}

#[derive(Debug, Clone, Copy)]
pub struct RealClock(Instant);

impl RealClock {
    pub fn start() -> Self {
        RealClock(Instant::now())
    }
}

impl Clock for RealClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    fn sleep_until(&mut self, t: f64) {
        let now = self.now();
        if t > now {
            std::thread::sleep(Duration::from_secs_f64(t - now));
        }
    }
}

/// Simulated time: sleeping jumps the clock forward.
#[derive(Debug, Clone, Copy, Default)]
pub struct VirtualClock(f64);

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        self.0
    }

    fn sleep_until(&mut self, t: f64) {
        self.0 = self.0.max(t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Wall-clock ticks; a reader thread feeds the buffer.
    Real,
    /// Simulated ticks; the source is pulled up to each tick's sample.
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub tick_ms: f64,
    pub clock: ClockMode,
    pub max_ticks: Option<u64>,
    pub duration_seconds: Option<f64>,
    pub sustain_seconds: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { tick_ms: 125.0, clock: ClockMode::Real, max_ticks: None, duration_seconds: None, sustain_seconds: 10.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopStats {
    pub ticks: u64,
    pub events: u64,
    pub paused_ticks: u64,
    pub missed_deadlines: u64,
    pub stale_events: u64,
    pub frames_received: u64,
    /// Chunks lost to sample-index gaps or rejected for a channel mismatch.
    pub frames_dropped: u64,
    pub samples_received: u64,
    pub alerts_raised: u64,
    pub mean_total_us: f64,
    pub p99_total_us: u64,
    pub max_total_us: u64,
    pub elapsed_seconds: f64,
    pub source_error: Option<String>,
}

#[derive(Debug)]
struct Intake {
    ring: RingBuffer,
    next_sample: Option<u64>,
    frames: u64,
    dropped: u64,
    samples: u64,
}

impl Intake {
    fn push(&mut self, c: &SourceChunk) {
        self.frames += 1;
        if let Some(expect) = self.next_sample {
            if c.first_sample > expect {
                self.dropped += 1;
                log::warn!("sample gap: expected {expect}, got {}", c.first_sample);
            }
        }
        match self.ring.push_chunk(c.samples.view()) {
            Ok(()) => {
                self.samples += c.samples.ncols() as u64;
                self.next_sample = Some(c.first_sample + c.samples.ncols() as u64);
            }
            Err(e) => {
                self.dropped += 1;
                log::warn!("chunk rejected: {e}");
            }
        }
    }
}

enum Feed {
    Inline { source: Box<dyn StreamSource>, closed: bool },
    Thread { closed: Arc<AtomicBool>, error: Arc<Mutex<Option<String>>>, handle: Option<JoinHandle<()>> },
}

fn p99(mut v: Vec<u64>) -> u64 {
    if v.is_empty() {
        return 0;
    }
    v.sort_unstable();
    v[((v.len() as f64 * 0.99).ceil() as usize).clamp(1, v.len()) - 1]
}

/// Runs the periodic tick until the source closes or a limit is reached.
/// One prediction event is published per unpaused tick; alert transitions
/// and control echoes are published as they occur.
pub fn run_loop(
    source: Box<dyn StreamSource>,
    mut pipeline: TickPipeline,
    cfg: &LoopConfig,
    sink: &mut dyn EventSink,
    control: Option<&Receiver<ControlMessage>>,
) -> Result<LoopStats, RealtimeError> {
    let names = source.channel_names().to_vec();
    if names != pipeline.front.channel_names() {
        return Err(RealtimeError::Config(format!(
            "pipeline expects channels {:?}, source provides {:?}",
            pipeline.front.channel_names(),
            names
        )));
    }
    let fs = source.rate_hz();
    let tick = cfg.tick_ms / 1e3;
    if !(tick > 0.0) {
        return Err(RealtimeError::Config("tick_ms must be positive".into()));
    }
    let tick_us = (cfg.tick_ms * 1e3) as u64;
    let intake = Arc::new(Mutex::new(Intake {
        ring: RingBuffer::new(names.len(), pipeline.front.window_samples()),
        next_sample: None,
        frames: 0,
        dropped: 0,
        samples: 0,
    }));

    let mut clock: Box<dyn Clock> = match cfg.clock {
        ClockMode::Real => Box::new(RealClock::start()),
        ClockMode::Virtual => Box::new(VirtualClock::default()),
    };
    let mut feed = match cfg.clock {
        ClockMode::Virtual => Feed::Inline { source, closed: false },
        ClockMode::Real => {
            let closed = Arc::new(AtomicBool::new(false));
            let error = Arc::new(Mutex::new(None));
            let (c, e, i) = (closed.clone(), error.clone(), intake.clone());
            let mut source = source;
            let handle = std::thread::Builder::new()
                .name("stream-reader".into())
                .spawn(move || {
                    loop {
                        match source.next_chunk() {
                            Ok(Some(chunk)) => i.lock().push(&chunk),
                            Ok(None) => break,
                            Err(err) => {
                                *e.lock() = Some(err.to_string());
                                break;
                            }
                        }
                    }
                    c.store(true, Ordering::SeqCst);
                })?;
            Feed::Thread { closed, error, handle: Some(handle) }
        }
    };

    let mut alert = AlertState::new(pipeline.threshold, cfg.sustain_seconds);
    let mut paused = false;
    let mut stats = LoopStats::default();
    let mut totals = Vec::new();
    let mut last_written = 0u64;
    let mut prev_t: Option<f64> = None;
    let mut k: u64 = 0;
    let mut source_error = None;

    loop {
        k += 1;
        let mut due = k as f64 * tick;
        if cfg.max_ticks.is_some_and(|m| stats.ticks >= m) || cfg.duration_seconds.is_some_and(|d| due > d + 1e-9) {
            break;
        }
        // a tick that starts more than one period late is skipped and counted
        let now = clock.now();
        if now > due + tick {
            let behind = ((now - due) / tick).floor() as u64;
            stats.missed_deadlines += behind;
            k += behind;
            due = k as f64 * tick;
            if cfg.duration_seconds.is_some_and(|d| due > d + 1e-9) {
                break;
            }
        }
        clock.sleep_until(due);

        let closed = match &mut feed {
            Feed::Inline { source, closed } => {
                let target = (due * fs).round() as u64;
                while !*closed && intake.lock().ring.total_written() < target {
                    match source.next_chunk() {
                        Ok(Some(chunk)) => intake.lock().push(&chunk),
                        Ok(None) => *closed = true,
                        Err(e) => {
                            source_error = Some(e.to_string());
                            *closed = true;
                        }
                    }
                }
                *closed && intake.lock().ring.total_written() < target
            }
            Feed::Thread { closed, .. } => closed.load(Ordering::SeqCst) && intake.lock().ring.total_written() == last_written,
        };
        if closed {
            break;
        }

        if let Some(rx) = control {
            let mut changed = false;
            for msg in rx.try_iter() {
                changed = true;
                match msg {
                    ControlMessage::SetThreshold { value } => {
                        pipeline.threshold = value;
                        alert.set_threshold(value);
                    }
                    ControlMessage::SetSustain { value } => alert.set_sustain(value),
                    ControlMessage::Pause => paused = true,
                    ControlMessage::Resume => paused = false,
                }
            }
            if changed {
                sink.publish(&PublishMessage::Control(Settings {
                    threshold: alert.threshold,
                    sustain: alert.sustain_seconds,
                    paused,
                }));
            }
        }

        stats.ticks += 1;
        let snap = intake.lock().ring.snapshot();
        last_written = snap.end_sample;
        if paused {
            stats.paused_ticks += 1;
            continue;
        }
        if snap.end_sample == 0 {
            continue;
        }
        let t = clock.now();
        let ev = pipeline.tick(&snap, t);
        stats.events += 1;
        if ev.latency_us.total > tick_us {
            stats.missed_deadlines += 1;
        }
        if ev.is_stale() {
            stats.stale_events += 1;
        }
        totals.push(ev.latency_us.total);
        let dt = prev_t.map_or(tick, |p| t - p);
        prev_t = Some(t);
        let transition = if ev.is_partial() { None } else { alert.update(ev.p, t, dt) };
        sink.publish(&PublishMessage::Prediction(ev));
        if let Some(tr) = transition {
            if tr.active {
                stats.alerts_raised += 1;
            }
            sink.publish(&tr.into());
        }
    }

    stats.elapsed_seconds = clock.now();
    if let Feed::Thread { error, handle, closed } = &mut feed {
        if let Some(h) = handle.take() {
            // a reader blocked on an endless source is left detached
            if closed.load(Ordering::SeqCst) {
                let _ = h.join();
            }
        }
        source_error = source_error.or_else(|| error.lock().take());
    }
    let i = intake.lock();
    stats.frames_received = i.frames;
    stats.frames_dropped = i.dropped;
    stats.samples_received = i.samples;
    stats.mean_total_us = if totals.is_empty() { 0.0 } else { totals.iter().sum::<u64>() as f64 / totals.len() as f64 };
    stats.max_total_us = totals.iter().copied().max().unwrap_or(0);
    stats.p99_total_us = p99(totals);
    stats.source_error = source_error;
    Ok(stats)
}
