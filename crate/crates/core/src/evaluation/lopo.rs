use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::ingest::EpochSet;
use crate::models::{AlgorithmId, Hyperparams, TrainedModel};

use super::metrics::{bootstrap_ci, clinical_grade, ClinicalGrade, ConfidenceInterval, Confusion, Metrics};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub held_out: String,
    pub train_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per subject, in the order given.
pub fn plan_lopo_subjects(subjects: &[String]) -> Result<FoldPlan, EvalError> {
    let mut distinct: Vec<String> = Vec::new();
    for s in subjects {
        if !distinct.contains(s) {
            distinct.push(s.clone());
        }
    }
    if distinct.len() < 3 {
        return Err(EvalError::TooFewSubjects { got: distinct.len() });
    }
    let folds = distinct
        .iter()
        .map(|h| Fold { held_out: h.clone(), train_subjects: distinct.iter().filter(|s| *s != h).cloned().collect() })
        .collect();
    Ok(FoldPlan { folds })
}

/// Leave-one-participant-out plan over an epoch set. Subjects whose epochs
/// hold a single class keep their fold; a warning is logged.
pub fn plan_lopo(set: &EpochSet) -> Result<FoldPlan, EvalError> {
    let plan = plan_lopo_subjects(&set.subjects)?;
    for s in &set.subjects {
        let (lo, hi) = set.class_counts(s);
        if lo == 0 || hi == 0 {
            log::warn!("subject {s} has single-class epochs (low {lo}, high {hi}); fold kept");
        }
    }
    Ok(plan)
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Train and test row indices of fold `k`. Panics if a held-out row
    /// would be used for training.
    pub fn split(&self, k: usize, subjects: &[String]) -> (Vec<usize>, Vec<usize>) {
        let fold = &self.folds[k];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in subjects.iter().enumerate() {
            if *s == fold.held_out {
                test.push(i);
            } else if fold.train_subjects.contains(s) {
                train.push(i);
            }
        }
        assert!(
            train.iter().all(|&i| subjects[i] != fold.held_out),
            "held-out subject {} leaked into training rows",
            fold.held_out
        );
        (train, test)
    }
}

/// Derives an independent seed for (base, stream).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub threshold: f64,
    /// Held-out rows timed per fold for the latency figure (0 = all).
    pub latency_rows: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            hyperparams: Hyperparams::default(),
            seed: 7,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            threshold: 0.5,
            latency_rows: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out: String,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: Option<f64>,
    pub train_ms: f64,
    /// Sum of the fold's scaler means and SDs, for auditing that each fold
    /// fits its own scaler.
    pub scaler_checksum: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row: usize,
    pub subject: String,
    pub truth: u8,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub algorithm: AlgorithmId,
    /// Over pooled held-out predictions.
    pub metrics: Metrics,
    pub ci: Option<ConfidenceInterval>,
    pub grade: ClinicalGrade,
    pub mean_latency_ms: f64,
    pub per_fold: Vec<FoldResult>,
    pub fold_accuracy_sd: f64,
    pub best_subject: Option<SubjectScore>,
    pub worst_subject: Option<SubjectScore>,
    /// Folds that trained successfully / total folds.
    pub coverage: f64,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub manifest_hash: String,
    pub n_rows: usize,
    pub n_subjects: usize,
    /// How metrics are aggregated over folds.
    pub aggregation: String,
    pub algorithms: Vec<AlgorithmReport>,
}

struct FoldOutcome {
    result: FoldResult,
    predictions: Vec<Prediction>,
    latency_ms: Vec<f64>,
}

fn run_fold(
    m: &FeatureMatrix,
    y: &[u8],
    plan: &FoldPlan,
    k: usize,
    alg: AlgorithmId,
    cfg: &EvalConfig,
) -> FoldOutcome {
    let (train, test) = plan.split(k, &m.subjects);
    let mut result = FoldResult {
        held_out: plan.folds[k].held_out.clone(),
        n_train: train.len(),
        n_test: test.len(),
        accuracy: None,
        train_ms: 0.0,
        scaler_checksum: f64::NAN,
        error: None,
    };
    let fitted = TrainedModel::fit(alg, &m.select(&train), &cfg.hyperparams, derive_seed(cfg.seed, k as u64));
    let model = match fitted {
        Ok(mut model) => {
            model.meta.fold = Some(result.held_out.clone());
            model
        }
        Err(e) => {
            log::warn!("{alg} fold {}: {e}", result.held_out);
            result.error = Some(e.to_string());
            return FoldOutcome { result, predictions: Vec::new(), latency_ms: Vec::new() };
        }
    };
    result.train_ms = model.meta.train_ms;
    result.scaler_checksum = model.standardization.mean.iter().chain(&model.standardization.sd).sum();
    let timed = if cfg.latency_rows == 0 { test.len() } else { cfg.latency_rows.min(test.len()) };
    let mut predictions = Vec::with_capacity(test.len());
    let mut latency_ms = Vec::with_capacity(timed);
    for (j, &row) in test.iter().enumerate() {
        let values = m.rows.row(row);
        let values = values.as_slice().expect("standard layout");
        let t0 = Instant::now();
        let p = match model.predict_proba_raw(values) {
            Ok(p) => p,
            Err(e) => {
                result.error = Some(e.to_string());
                return FoldOutcome { result, predictions: Vec::new(), latency_ms: Vec::new() };
            }
        };
        if j < timed {
            latency_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        predictions.push(Prediction { row, subject: result.held_out.clone(), truth: y[row], probability: p });
    }
    if !predictions.is_empty() {
        let correct = predictions.iter().filter(|p| (p.probability >= cfg.threshold) == (p.truth == 1)).count();
        result.accuracy = Some(correct as f64 / predictions.len() as f64);
    }
    FoldOutcome { result, predictions, latency_ms }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Leave-one-participant-out evaluation of each algorithm on a feature
/// matrix. Scalers (and imputation means) are fitted on training folds only.
/// Training failures are recorded per fold and the remaining folds still run.
pub fn run_eval(m: &FeatureMatrix, algorithms: &[AlgorithmId], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    let y = m.targets()?;
    let plan = plan_lopo_subjects(&m.subjects)?;
    let mut reports = Vec::with_capacity(algorithms.len());
    for &alg in algorithms {
        let outcomes: Vec<FoldOutcome> = (0..plan.len()).into_par_iter().map(|k| run_fold(m, &y, &plan, k, alg, cfg)).collect();
        let ok = outcomes.iter().filter(|o| o.result.error.is_none()).count();
        if ok == 0 {
            return Err(EvalError::AllFoldsFailed {
                algorithm: alg.to_string(),
                first: outcomes[0].result.error.clone().unwrap_or_default(),
            });
        }
        let predictions: Vec<Prediction> = outcomes.iter().flat_map(|o| o.predictions.iter().cloned()).collect();
        let truth: Vec<u8> = predictions.iter().map(|p| p.truth).collect();
        let pred: Vec<u8> = predictions.iter().map(|p| (p.probability >= cfg.threshold) as u8).collect();
        let metrics = Confusion::from_predictions(&truth, &pred).metrics();
        let correct: Vec<bool> = truth.iter().zip(&pred).map(|(t, p)| t == p).collect();
        let ci = bootstrap_ci(&correct, cfg.bootstrap_resamples, cfg.ci_level, derive_seed(cfg.seed, u64::MAX)).ok();
        let lat: Vec<f64> = outcomes.iter().flat_map(|o| o.latency_ms.iter().copied()).collect();
        let per_fold: Vec<FoldResult> = outcomes.into_iter().map(|o| o.result).collect();
        let scores: Vec<SubjectScore> = per_fold
            .iter()
            .filter_map(|f| f.accuracy.map(|a| SubjectScore { subject: f.held_out.clone(), accuracy: a }))
            .collect();
        let accs: Vec<f64> = scores.iter().map(|s| s.accuracy).collect();
        let best = scores.iter().fold(None::<&SubjectScore>, |b, s| match b {
            Some(b) if b.accuracy >= s.accuracy => Some(b),
            _ => Some(s),
        });
        let worst = scores.iter().fold(None::<&SubjectScore>, |b, s| match b {
            Some(b) if b.accuracy <= s.accuracy => Some(b),
            _ => Some(s),
        });
        reports.push(AlgorithmReport {
            algorithm: alg,
            grade: clinical_grade(metrics.accuracy),
            metrics,
            ci,
            mean_latency_ms: if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 },
            fold_accuracy_sd: sd(&accs),
            best_subject: best.cloned(),
            worst_subject: worst.cloned(),
            coverage: ok as f64 / per_fold.len() as f64,
            per_fold,
            predictions,
        });
    }
    Ok(EvalReport {
        seed: cfg.seed,
        manifest_hash: m.manifest_hash.clone(),
        n_rows: m.n_rows(),
        n_subjects: plan.len(),
        aggregation: "pooled held-out predictions".into(),
        algorithms: reports,
    })
}

impl EvalReport {
    /// Fixed-width table with one row per algorithm.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<20} {:>8} {:>9} {:>8} {:>8} {:>8} {:>8} {:>10} {:>17} {:>10}\n",
            "Algorithm", "F1", "Precision", "Recall", "Accuracy", "Sens", "Spec", "Speed", "95% CI", "Grade"
        );
        for r in &self.algorithms {
            let m = &r.metrics;
            let ci = r.ci.map_or("n/a".to_string(), |c| format!("{:.2}-{:.2}%", c.lo * 100.0, c.hi * 100.0));
            s.push_str(&format!(
                "{:<20} {:>7.2}% {:>8.2}% {:>7.2}% {:>7.2}% {:>7.2}% {:>7.2}% {:>8.3}ms {:>17} {:>10}\n",
                r.algorithm.as_str(),
                m.f1 * 100.0,
                m.precision * 100.0,
                m.recall * 100.0,
                m.accuracy * 100.0,
                m.sensitivity * 100.0,
                m.specificity * 100.0,
                r.mean_latency_ms,
                ci,
                r.grade.as_str()
            ));
        }
        s.push_str(&format!(
            "\n{} rows, {} subjects, metrics over {}; seed {}; manifest {}\n",
            self.n_rows, self.n_subjects, self.aggregation, self.seed, self.manifest_hash
        ));
        for r in &self.algorithms {
            let c = r.metrics.confusion;
            s.push_str(&format!(
                "{}: TP {} FP {} TN {} FN {}; fold SD {:.2}%; coverage {:.0}%",
                r.algorithm,
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                r.fold_accuracy_sd * 100.0,
                r.coverage * 100.0
            ));
            if let (Some(b), Some(w)) = (&r.best_subject, &r.worst_subject) {
                s.push_str(&format!("; best {} {:.1}%, worst {} {:.1}%", b.subject, b.accuracy * 100.0, w.subject, w.accuracy * 100.0));
            }
            s.push('\n');
        }
        s
    }

    pub fn algorithm(&self, alg: AlgorithmId) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|r| r.algorithm == alg)
    }
}
