use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureManifest, FeatureMatrix};
use crate::models::{AlgorithmId, TrainedModel};

use super::lopo::{derive_seed, plan_lopo_subjects, EvalConfig};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub slot: usize,
    pub feature: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Sorted by descending mean importance, ties by slot.
    pub entries: Vec<ImportanceEntry>,
    pub n_repeats: usize,
    pub scoring: String,
    pub baseline: f64,
    pub n_rows: usize,
}

impl ImportanceReport {
    /// 1-based rank of `slot`.
    pub fn rank_of(&self, slot: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.slot == slot).map(|r| r + 1)
    }

    /// Best rank among `slots`.
    pub fn best_rank(&self, slots: &[usize]) -> Option<usize> {
        slots.iter().filter_map(|&s| self.rank_of(s)).min()
    }

    pub fn to_table(&self, top: usize) -> String {
        let mut s = format!(
            "permutation importance ({}, {} repeats, {} rows, baseline {:.4})\n{:>4} {:>5} {:>10} {:>10}  feature\n",
            self.scoring, self.n_repeats, self.n_rows, self.baseline, "rank", "slot", "mean", "sd"
        );
        for (r, e) in self.entries.iter().take(top).enumerate() {
            s.push_str(&format!("{:>4} {:>5} {:>10.5} {:>10.5}  {}\n", r + 1, e.slot, e.mean, e.sd, e.feature));
        }
        s
    }
}

/// Correct-count drop per (slot, repeat) on standardized rows `xs`.
fn count_drops(model: &TrainedModel, xs: ArrayView2<'_, f64>, y: &[u8], threshold: f64, n_repeats: usize, seed: u64) -> (usize, Array2<f64>) {
    let clf = &model.classifier;
    let (n, d) = xs.dim();
    let correct = |p: &[f64]| p.iter().zip(y).filter(|(p, &t)| (**p >= threshold) == (t == 1)).count();
    let base = correct(&clf.proba_rows(xs));
    let cache = clf.batch_cache(xs);
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = xs.column(j).to_vec();
            (0..n_repeats)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((j * n_repeats + r) as u64);
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    let shuffled: Vec<f64> = perm.iter().map(|&i| col[i]).collect();
                    if shuffled == col {
                        return 0.0;
                    }
                    base as f64 - correct(&clf.proba_with_column(xs, &cache, j, &shuffled)) as f64
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    (base, Array2::from_shape_vec((d, n_repeats), flat).expect("d x repeats"))
}

fn summarise(drops: &Array2<f64>, n_rows: usize, base_correct: usize, manifest: Option<&FeatureManifest>) -> ImportanceReport {
    let (d, reps) = drops.dim();
    let mut entries: Vec<ImportanceEntry> = (0..d)
        .map(|j| {
            let v: Vec<f64> = drops.row(j).iter().map(|c| c / n_rows as f64).collect();
            let mean = v.iter().sum::<f64>() / reps as f64;
            let sd = if reps > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt() } else { 0.0 };
            let feature = manifest.and_then(|m| m.entries.get(j)).map_or_else(|| format!("slot{j}"), |e| {
                if e.detail.is_empty() {
                    format!("{}[{}]", e.feature, e.target)
                } else {
                    format!("{}[{}/{}]", e.feature, e.target, e.detail)
                }
            });
            ImportanceEntry { slot: j, feature, mean, sd }
        })
        .collect();
    entries.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.slot.cmp(&b.slot)));
    ImportanceReport {
        entries,
        n_repeats: reps,
        scoring: "accuracy".into(),
        baseline: base_correct as f64 / n_rows as f64,
        n_rows,
    }
}

/// Accuracy drop when each slot is shuffled across the rows of `m`,
/// averaged over `n_repeats` seeded shuffles.
pub fn permutation_importance(
    model: &TrainedModel,
    m: &FeatureMatrix,
    n_repeats: usize,
    seed: u64,
    manifest: Option<&FeatureManifest>,
) -> Result<ImportanceReport, EvalError> {
    model.check_manifest(&m.manifest_hash)?;
    let y = m.targets()?;
    if y.is_empty() || n_repeats == 0 {
        return Err(EvalError::InvalidConfig("importance needs rows and at least one repeat".into()));
    }
    let xs = model.standardization.apply_rows(m.rows.view())?;
    let (base, drops) = count_drops(model, xs.view(), &y, 0.5, n_repeats, seed);
    Ok(summarise(&drops, y.len(), base, manifest))
}

/// Importance pooled over leave-one-participant-out folds: each fold's model
/// is scored on its held-out subject and the correct-count drops are summed
/// before dividing by the total number of held-out rows.
pub fn lopo_importance(
    m: &FeatureMatrix,
    alg: AlgorithmId,
    cfg: &EvalConfig,
    n_repeats: usize,
    manifest: Option<&FeatureManifest>,
) -> Result<ImportanceReport, EvalError> {
    let y = m.targets()?;
    let plan = plan_lopo_subjects(&m.subjects)?;
    let mut total: Option<Array2<f64>> = None;
    let mut base_total = 0;
    let mut n_total = 0;
    for k in 0..plan.len() {
        let (train, test) = plan.split(k, &m.subjects);
        let model = match TrainedModel::fit(alg, &m.select(&train), &cfg.hyperparams, derive_seed(cfg.seed, k as u64)) {
            Ok(model) => model,
            Err(e) => {
                log::warn!("importance fold {}: {e}", plan.folds[k].held_out);
                continue;
            }
        };
        let xs = model.standardization.apply_rows(m.rows.select(ndarray::Axis(0), &test).view())?;
        let yt: Vec<u8> = test.iter().map(|&i| y[i]).collect();
        let (base, drops) = count_drops(&model, xs.view(), &yt, cfg.threshold, n_repeats, derive_seed(cfg.seed ^ 0x1A5, k as u64));
        base_total += base;
        n_total += yt.len();
        total = Some(match total {
            Some(t) => t + drops,
            None => drops,
        });
    }
    let total = total.ok_or_else(|| EvalError::AllFoldsFailed { algorithm: alg.to_string(), first: "importance".into() })?;
    Ok(summarise(&total, n_total, base_total, manifest))
}
