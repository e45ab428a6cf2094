use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use super::EvalError;

/// Binary confusion counts with high pain as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn from_predictions(truth: &[u8], predicted: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == 1, p == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Equal to sensitivity.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy(),
            precision: self.precision(),
            recall: self.recall(),
            sensitivity: self.recall(),
            specificity: self.specificity(),
            f1: self.f1(),
            confusion: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClinicalGrade {
    Excellent,
    Good,
    Acceptable,
    Limited,
}

impl ClinicalGrade {
    pub fn as_str(self) -> &'static str {
        match self {
            ClinicalGrade::Excellent => "EXCELLENT",
            ClinicalGrade::Good => "GOOD",
            ClinicalGrade::Acceptable => "ACCEPTABLE",
            ClinicalGrade::Limited => "LIMITED",
        }
    }
}

impl fmt::Display for ClinicalGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grade lower bounds on accuracy, in percent.
pub const GRADE_THRESHOLDS_PCT: [(ClinicalGrade, f64); 3] =
    [(ClinicalGrade::Excellent, 88.0), (ClinicalGrade::Good, 87.0), (ClinicalGrade::Acceptable, 82.0)];

/// Maps an accuracy in [0, 1] to a grade.
pub fn clinical_grade(accuracy: f64) -> ClinicalGrade {
    // percent rounded to 1e-9 so that 0.88 grades like 88%
    let pct = (accuracy * 100.0 * 1e9).round() / 1e9;
    GRADE_THRESHOLDS_PCT
        .iter()
        .find(|(_, lo)| pct >= *lo)
        .map_or(ClinicalGrade::Limited, |(g, _)| *g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Percentile bootstrap of accuracy, resampling individual predictions.
pub fn bootstrap_ci(correct: &[bool], n_resamples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval, EvalError> {
    if correct.len() < 10 {
        return Err(EvalError::TooFewPredictions { got: correct.len() });
    }
    if !(level > 0.0 && level < 1.0) || n_resamples == 0 {
        return Err(EvalError::InvalidConfig(format!("bootstrap level {level}, resamples {n_resamples}")));
    }
    let n = correct.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).filter(|_| correct[rng.random_range(0..n)]).count() as f64 / n as f64)
        .collect();
    acc.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval { level, lo: quantile(&acc, tail), hi: quantile(&acc, 1.0 - tail), resamples: n_resamples })
}
