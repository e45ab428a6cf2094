//! Leave-one-participant-out evaluation, metrics, bootstrap intervals,
//! permutation importance, clinical grades and the synthetic data generator.

mod importance;
mod lopo;
mod metrics;
pub mod synth;

use thiserror::Error;

use crate::features::FeatureError;
use crate::models::ModelError;

pub use importance::{lopo_importance, permutation_importance, ImportanceEntry, ImportanceReport};
pub use lopo::{
    derive_seed, plan_lopo, plan_lopo_subjects, run_eval, AlgorithmReport, EvalConfig, EvalReport, Fold, FoldPlan,
    FoldResult, Prediction, SubjectScore,
};
pub use metrics::{
    bootstrap_ci, clinical_grade, ClinicalGrade, ConfidenceInterval, Confusion, Metrics, GRADE_THRESHOLDS_PCT,
};
pub use synth::{planted_slots, synth_generate, StateSchedule, SynthConfig, SynthStream};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-participant-out needs at least 3 subjects, got {got}")]
    TooFewSubjects { got: usize },
    #[error("need at least 10 predictions, got {got}")]
    TooFewPredictions { got: usize },
    #[error("every fold failed for {algorithm}: {first}")]
    AllFoldsFailed { algorithm: String, first: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}
