use serde::{Deserialize, Serialize};

/// Drop below threshold − this before an active alert clears.
pub const ALERT_HYSTERESIS: f64 = 0.05;

/// Sustained-probability alert. The streak counts tick durations while the
/// probability stays at or above the threshold; the alert raises once the
/// streak reaches `sustain_seconds` and clears only below
/// `threshold - ALERT_HYSTERESIS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertState {
    pub threshold: f64,
    pub sustain_seconds: f64,
    pub streak_seconds: f64,
    pub active: bool,
    /// Time the current alert was raised.
    pub since: Option<f64>,
}

impl Default for AlertState {
    fn default() -> Self {
        AlertState::new(0.8, 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertTransition {
    pub active: bool,
    /// Event time of the transition.
    pub at: f64,
    /// Onset time of the alert (equal to `at` when raised).
    pub since: f64,
}

impl AlertState {
    pub fn new(threshold: f64, sustain_seconds: f64) -> Self {
        AlertState { threshold, sustain_seconds, streak_seconds: 0.0, active: false, since: None }
    }

    /// Accounts one event of duration `dt` at time `t`.
    pub fn update(&mut self, probability: f64, t: f64, dt: f64) -> Option<AlertTransition> {
        if probability >= self.threshold {
            self.streak_seconds += dt;
        } else {
            self.streak_seconds = 0.0;
        }
        if !self.active && probability >= self.threshold && self.streak_seconds >= self.sustain_seconds - 1e-9 {
            self.active = true;
            self.since = Some(t);
            return Some(AlertTransition { active: true, at: t, since: t });
        }
        if self.active && probability < self.threshold - ALERT_HYSTERESIS {
            self.active = false;
            let since = self.since.take().unwrap_or(t);
            return Some(AlertTransition { active: false, at: t, since });
        }
        None
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold;
    }

    pub fn set_sustain(&mut self, seconds: f64) {
        self.sustain_seconds = seconds;
    }
}
