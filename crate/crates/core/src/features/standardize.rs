use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::FeatureError;

pub const DEFAULT_SD_FLOOR: f64 = 1e-8;

/// Per-slot mean and population SD learned from training rows.
///
/// Applying it replaces NaN (pending imputation) by the training mean and
/// z-scores; slots whose SD is below the floor map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationState {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub sd_floor: f64,
    pub fitted: bool,
}

impl Default for StandardizationState {
    fn default() -> Self {
        StandardizationState { mean: Vec::new(), sd: Vec::new(), sd_floor: DEFAULT_SD_FLOOR, fitted: false }
    }
}

impl StandardizationState {
    /// Fits on training rows, ignoring NaN entries. A slot that is NaN in
    /// every row gets mean 0 and standardizes to 0.
    pub fn fit(rows: ArrayView2<'_, f64>) -> Self {
        Self::fit_with_floor(rows, DEFAULT_SD_FLOOR)
    }

    pub fn fit_with_floor(rows: ArrayView2<'_, f64>, sd_floor: f64) -> Self {
        let d = rows.ncols();
        let mut mean = vec![0.0; d];
        let mut sd = vec![0.0; d];
        for (j, col) in rows.axis_iter(Axis(1)).enumerate() {
            let vals: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
            mean[j] = m;
            sd[j] = var.sqrt();
        }
        StandardizationState { mean, sd, sd_floor, fitted: true }
    }

    pub fn n_slots(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, d: usize) -> Result<(), FeatureError> {
        if !self.fitted {
            return Err(FeatureError::NotFitted);
        }
        if d != self.mean.len() {
            return Err(FeatureError::SlotCountMismatch { expected: self.mean.len(), got: d });
        }
        Ok(())
    }

    fn z(&self, j: usize, v: f64) -> f64 {
        if self.sd[j] < self.sd_floor {
            return 0.0;
        }
        let v = if v.is_finite() { v } else { self.mean[j] };
        (v - self.mean[j]) / self.sd[j]
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>, FeatureError> {
        self.check(values.len())?;
        Ok(values.iter().enumerate().map(|(j, &v)| self.z(j, v)).collect())
    }

    pub fn apply_rows(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>, FeatureError> {
        self.check(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.z(j, *v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_slot() {
        let s = StandardizationState::fit(array![[1.0, 5.0], [3.0, 5.0]].view());
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.sd, vec![1.0, 0.0]);
        assert_eq!(s.apply(&[3.0, 123.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn nan_is_imputed_to_mean() {
        let s = StandardizationState::fit(array![[1.0], [f64::NAN], [3.0]].view());
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.apply(&[f64::NAN]).unwrap(), vec![0.0]);
    }

    #[test]
    fn unfitted_state_errors() {
        assert!(matches!(StandardizationState::default().apply(&[1.0]), Err(FeatureError::NotFitted)));
    }
}
