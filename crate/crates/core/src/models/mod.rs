//! The eight classifiers behind one train / predict-probability contract,
//! and the versioned, digest-protected model file.

pub mod ensemble;
pub mod knn;
pub mod linear;
mod serialize;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureMatrix, FeatureVector, StandardizationState};
use ensemble::{BoostParams, BoostedTrees, ForestParams, RandomForest};
use knn::Knn;
use linear::{train_lda, train_logistic, GaussianNb, LinearModel, LogisticParams};
use svm::{SvmModel, SvmParams};

pub use serialize::{load_model, read_model, save_model, write_model, MODEL_FILE_MAGIC, MODEL_FILE_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data holds a single class")]
    SingleClassData,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("need at least {needed} training rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("manifest mismatch: model expects {expected}, vector has {got}")]
    ManifestMismatch { expected: String, got: String },
    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),
    #[error("hyperparameter: {0}")]
    InvalidHyperparam(String),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("model file version {found} (supported: {supported})")]
    VersionMismatch { found: u8, supported: u8 },
    #[error("corrupt model file: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    SvmRbf,
    Knn,
    RandomForest,
    RegGradBoost,
    LogisticRegression,
    LinearDiscriminant,
    GradBoost,
    GaussianNb,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 8] = [
        AlgorithmId::SvmRbf,
        AlgorithmId::Knn,
        AlgorithmId::RandomForest,
        AlgorithmId::RegGradBoost,
        AlgorithmId::LogisticRegression,
        AlgorithmId::LinearDiscriminant,
        AlgorithmId::GradBoost,
        AlgorithmId::GaussianNb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::SvmRbf => "svm_rbf",
            AlgorithmId::Knn => "knn",
            AlgorithmId::RandomForest => "random_forest",
            AlgorithmId::RegGradBoost => "reg_grad_boost",
            AlgorithmId::LogisticRegression => "logistic_regression",
            AlgorithmId::LinearDiscriminant => "linear_discriminant",
            AlgorithmId::GradBoost => "grad_boost",
            AlgorithmId::GaussianNb => "gaussian_nb",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let short = match norm.as_str() {
            "svm" => Some(AlgorithmId::SvmRbf),
            "rf" => Some(AlgorithmId::RandomForest),
            "xgb" | "xgboost" => Some(AlgorithmId::RegGradBoost),
            "lr" => Some(AlgorithmId::LogisticRegression),
            "lda" => Some(AlgorithmId::LinearDiscriminant),
            "gbm" => Some(AlgorithmId::GradBoost),
            "nb" | "gnb" => Some(AlgorithmId::GaussianNb),
            _ => None,
        };
        short
            .or_else(|| AlgorithmId::ALL.into_iter().find(|a| a.as_str() == norm))
            .ok_or_else(|| ModelError::UnknownAlgorithm(s.to_string()))
    }
}

/// Pinned defaults for every algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub svm: SvmParams,
    pub knn_k: usize,
    pub forest: ForestParams,
    pub grad_boost: BoostParams,
    pub reg_grad_boost: BoostParams,
    pub logistic: LogisticParams,
    pub lda_shrinkage: f64,
    pub nb_var_smoothing: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            svm: SvmParams::default(),
            knn_k: 5,
            forest: ForestParams::default(),
            grad_boost: BoostParams::grad_boost(),
            reg_grad_boost: BoostParams::reg_grad_boost(),
            logistic: LogisticParams::default(),
            lda_shrinkage: 1e-3,
            nb_var_smoothing: 1e-9,
        }
    }
}

impl Hyperparams {
    /// Keys accepted by [`set`](Self::set).
    pub const KEYS: [&'static str; 20] = [
        "svm.c",
        "svm.gamma",
        "svm.tol",
        "svm.max_iter",
        "knn.k",
        "rf.n_trees",
        "rf.max_depth",
        "rf.bootstrap",
        "gb.n_trees",
        "gb.max_depth",
        "gb.learning_rate",
        "xgb.n_trees",
        "xgb.max_depth",
        "xgb.learning_rate",
        "xgb.lambda",
        "xgb.min_child_weight",
        "lr.lambda",
        "lr.grad_tol",
        "lda.shrinkage",
        "nb.var_smoothing",
    ];

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        let bad = || ModelError::InvalidHyperparam(format!("{key}={value}"));
        let f = || value.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).ok_or_else(bad);
        let u = || value.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        match key {
            "svm.c" => self.svm.c = f()?,
            "svm.gamma" => self.svm.gamma = if value == "scale" { None } else { Some(f()?) },
            "svm.tol" => self.svm.tol = f()?,
            "svm.max_iter" => self.svm.max_iter = u()?,
            "knn.k" => self.knn_k = u()?,
            "rf.n_trees" => self.forest.n_trees = u()?,
            "rf.max_depth" => self.forest.max_depth = u()?,
            "rf.bootstrap" => self.forest.bootstrap = value.parse().map_err(|_| bad())?,
            "gb.n_trees" => self.grad_boost.n_trees = u()?,
            "gb.max_depth" => self.grad_boost.max_depth = u()?,
            "gb.learning_rate" => self.grad_boost.learning_rate = f()?,
            "xgb.n_trees" => self.reg_grad_boost.n_trees = u()?,
            "xgb.max_depth" => self.reg_grad_boost.max_depth = u()?,
            "xgb.learning_rate" => self.reg_grad_boost.learning_rate = f()?,
            "xgb.lambda" => self.reg_grad_boost.lambda = f()?,
            "xgb.min_child_weight" => self.reg_grad_boost.min_child_weight = f()?,
            "lr.lambda" => self.logistic.lambda = f()?,
            "lr.grad_tol" => self.logistic.grad_tol = f()?,
            "lda.shrinkage" => self.lda_shrinkage = f()?,
            "nb.var_smoothing" => self.nb_var_smoothing = f()?,
            _ => {
                return Err(ModelError::InvalidHyperparam(format!(
                    "unknown key '{key}' (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses a `key=value` pair and applies it.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ModelError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ModelError::InvalidHyperparam(format!("expected key=value, got '{kv}'")))?;
        self.set(k.trim(), v.trim())
    }
}

/// Learned parameters of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    Svm(SvmModel),
    Knn(Knn),
    Forest(RandomForest),
    Boosted(BoostedTrees),
    Linear(LinearModel),
    NaiveBayes(GaussianNb),
}

/// Per-batch state that lets one column be replaced without recomputing
/// every row from scratch.
pub enum BatchCache {
    /// Squared distances to stored rows (SVM support vectors, KNN training set).
    Distances(Array2<f64>),
    /// Per-row logit.
    Logits(Vec<f64>),
    None,
}

impl Classifier {
    pub fn n_features(&self) -> Option<usize> {
        match self {
            Classifier::Svm(m) => Some(m.support.ncols()),
            Classifier::Knn(m) => Some(m.x.ncols()),
            Classifier::Linear(m) => Some(m.weights.len()),
            Classifier::NaiveBayes(m) => Some(m.mean[0].len()),
            Classifier::Forest(_) | Classifier::Boosted(_) => None,
        }
    }

    /// P(high pain) for one standardized row.
    pub fn proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            Classifier::Svm(m) => m.proba(x),
            Classifier::Knn(m) => m.proba(x),
            Classifier::Forest(m) => m.proba(x),
            Classifier::Boosted(m) => m.proba(x),
            Classifier::Linear(m) => m.proba(x),
            Classifier::NaiveBayes(m) => m.proba(x),
        }
    }

    pub fn proba_rows(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.axis_iter(Axis(0)).map(|r| self.proba(r)).collect()
    }

    fn stored_rows(&self) -> Option<&Array2<f64>> {
        match self {
            Classifier::Svm(m) => Some(&m.support),
            Classifier::Knn(m) => Some(&m.x),
            _ => None,
        }
    }

    pub fn batch_cache(&self, x: ArrayView2<'_, f64>) -> BatchCache {
        if let Some(stored) = self.stored_rows() {
            let mut d = Array2::zeros((x.nrows(), stored.nrows()));
            for (t, q) in x.axis_iter(Axis(0)).enumerate() {
                for (s, r) in stored.axis_iter(Axis(0)).enumerate() {
                    d[[t, s]] = r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                }
            }
            return BatchCache::Distances(d);
        }
        match self {
            Classifier::Linear(m) => BatchCache::Logits(x.axis_iter(Axis(0)).map(|r| m.logit(r)).collect()),
            Classifier::NaiveBayes(m) => BatchCache::Logits(x.axis_iter(Axis(0)).map(|r| m.log_odds(r)).collect()),
            _ => BatchCache::None,
        }
    }

    /// Probabilities of `x` with column `j` replaced by `col`.
    pub fn proba_with_column(&self, x: ArrayView2<'_, f64>, cache: &BatchCache, j: usize, col: &[f64]) -> Vec<f64> {
        match (self, cache) {
            (Classifier::Svm(_) | Classifier::Knn(_), BatchCache::Distances(d)) => {
                let stored = self.stored_rows().expect("distance models store rows");
                let sj = stored.column(j);
                let mut row = vec![0.0; stored.nrows()];
                (0..x.nrows())
                    .map(|t| {
                        let (old, new) = (x[[t, j]], col[t]);
                        for (s, r) in row.iter_mut().enumerate() {
                            let (a, b) = (sj[s] - old, sj[s] - new);
                            *r = (d[[t, s]] - a * a + b * b).max(0.0);
                        }
                        match self {
                            Classifier::Svm(m) => m.platt.prob(m.decision_from_distances(ArrayView1::from(&row))),
                            Classifier::Knn(m) => m.proba_from_distances(&row),
                            _ => unreachable!(),
                        }
                    })
                    .collect()
            }
            (Classifier::Linear(m), BatchCache::Logits(z)) => (0..x.nrows())
                .map(|t| linear::sigmoid(z[t] + m.weights[j] * (col[t] - x[[t, j]])))
                .collect(),
            (Classifier::NaiveBayes(m), BatchCache::Logits(z)) => (0..x.nrows())
                .map(|t| linear::sigmoid(z[t] - m.term(j, x[[t, j]]) + m.term(j, col[t])))
                .collect(),
            _ => {
                let mut xm = x.to_owned();
                xm.column_mut(j).iter_mut().zip(col).for_each(|(v, c)| *v = *c);
                self.proba_rows(xm.view())
            }
        }
    }
}

fn check_training_data(x: ArrayView2<'_, f64>, y: &[u8]) -> Result<(), ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() < 2 {
        return Err(ModelError::TooFewRows { needed: 2, got: x.nrows() });
    }
    let pos = y.iter().filter(|&&c| c == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::SingleClassData);
    }
    for ((r, c), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(ModelError::NonFiniteFeature { row: r, col: c });
        }
    }
    Ok(())
}

/// Trains one algorithm on standardized rows with targets 1 = high pain.
/// Deterministic in (data, hyperparameters, seed).
pub fn train(alg: AlgorithmId, x: ArrayView2<'_, f64>, y: &[u8], hp: &Hyperparams, seed: u64) -> Result<Classifier, ModelError> {
    check_training_data(x, y)?;
    Ok(match alg {
        AlgorithmId::SvmRbf => Classifier::Svm(SvmModel::train(x, y, &hp.svm)),
        AlgorithmId::Knn => Classifier::Knn(Knn::train(x, y, hp.knn_k)),
        AlgorithmId::RandomForest => Classifier::Forest(RandomForest::train(x, y, &hp.forest, seed)),
        AlgorithmId::GradBoost => Classifier::Boosted(BoostedTrees::train_grad_boost(x, y, &hp.grad_boost)),
        AlgorithmId::RegGradBoost => Classifier::Boosted(BoostedTrees::train_reg_grad_boost(x, y, &hp.reg_grad_boost)),
        AlgorithmId::LogisticRegression => Classifier::Linear(train_logistic(x, y, &hp.logistic)?),
        AlgorithmId::LinearDiscriminant => Classifier::Linear(train_lda(x, y, hp.lda_shrinkage)?),
        AlgorithmId::GaussianNb => Classifier::NaiveBayes(GaussianNb::train(x, y, hp.nb_var_smoothing)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub fold: Option<String>,
    pub train_ms: f64,
    pub n_train: usize,
}

/// A classifier bundled with the scaler and manifest it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub algorithm: AlgorithmId,
    pub classifier: Classifier,
    pub standardization: StandardizationState,
    pub manifest_hash: String,
    pub hyperparams: Hyperparams,
    pub meta: TrainMeta,
}

impl TrainedModel {
    /// Fits the scaler on `m`, trains on the standardized rows.
    pub fn fit(alg: AlgorithmId, m: &FeatureMatrix, hp: &Hyperparams, seed: u64) -> Result<Self, ModelError> {
        let y = m.targets()?;
        let standardization = StandardizationState::fit(m.rows.view());
        let xs = standardization.apply_rows(m.rows.view())?;
        let t0 = Instant::now();
        let classifier = train(alg, xs.view(), &y, hp, seed)?;
        Ok(TrainedModel {
            algorithm: alg,
            classifier,
            standardization,
            manifest_hash: m.manifest_hash.clone(),
            hyperparams: hp.clone(),
            meta: TrainMeta { seed, fold: None, train_ms: t0.elapsed().as_secs_f64() * 1e3, n_train: y.len() },
        })
    }

    pub fn check_manifest(&self, hash: &str) -> Result<(), ModelError> {
        if hash != self.manifest_hash {
            return Err(ModelError::ManifestMismatch { expected: self.manifest_hash.clone(), got: hash.to_string() });
        }
        Ok(())
    }

    /// Standardizes (imputing NaN slots) and returns P(high pain).
    pub fn predict_proba(&self, v: &FeatureVector) -> Result<f64, ModelError> {
        self.check_manifest(&v.manifest_hash)?;
        self.predict_proba_raw(&v.values)
    }

    /// Same as [`predict_proba`](Self::predict_proba) for a bare 537-value row.
    pub fn predict_proba_raw(&self, values: &[f64]) -> Result<f64, ModelError> {
        let z = self.standardization.apply(values)?;
        Ok(self.classifier.proba(ArrayView1::from(&z)))
    }

    pub fn predict(&self, v: &FeatureVector, threshold: f64) -> Result<bool, ModelError> {
        Ok(self.predict_proba(v)? >= threshold)
    }
}
