use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ModelError;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// P(high) = σ(w·x + b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn logit(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub lambda: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { lambda: 1e-2, grad_tol: 1e-6, max_iter: 100 }
    }
}

/// Minimises mean log-loss + (λ/2)‖w‖² (intercept unpenalised) by Newton
/// steps with backtracking until ‖∇‖ < `grad_tol`.
pub fn train_logistic(x: ArrayView2<'_, f64>, y: &[u8], p: &LogisticParams) -> Result<LinearModel, ModelError> {
    let (n, d) = x.dim();
    let nf = n as f64;
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[[i, j]] } else { 1.0 });
    let yv = DVector::from_iterator(n, y.iter().map(|&c| c as f64));
    let mut beta = DVector::<f64>::zeros(d + 1);
    let penalty = |b: &DVector<f64>| 0.5 * p.lambda * b.rows(0, d).norm_squared();
    let loss = |b: &DVector<f64>| {
        let z = &design * b;
        let ll: f64 = z
            .iter()
            .zip(yv.iter())
            .map(|(&zi, &yi)| {
                let sp = if zi > 0.0 { zi + (-zi).exp().ln_1p() } else { zi.exp().ln_1p() };
                sp - yi * zi
            })
            .sum();
        ll / nf + penalty(b)
    };
    let mut f = loss(&beta);
    for _ in 0..p.max_iter {
        let z = &design * &beta;
        let prob = z.map(sigmoid);
        let mut grad = design.transpose() * (&prob - &yv) / nf;
        for j in 0..d {
            grad[j] += p.lambda * beta[j];
        }
        if grad.norm() < p.grad_tol {
            break;
        }
        let w = prob.map(|q| q * (1.0 - q) / nf);
        let mut weighted = design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut hess = design.transpose() * weighted;
        for j in 0..d {
            hess[(j, j)] += p.lambda;
        }
        hess[(d, d)] += 1e-12;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess.lu().solve(&grad).ok_or(ModelError::Singular("logistic Hessian"))?,
        };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-10 {
            let cand = &beta - &step * t;
            let fc = loss(&cand);
            if fc <= f {
                beta = cand;
                f = fc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(LinearModel { weights: beta.rows(0, d).iter().copied().collect(), bias: beta[d] })
}

fn class_means(x: ArrayView2<'_, f64>, y: &[u8]) -> [Vec<f64>; 2] {
    let d = x.ncols();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (row, &c) in x.axis_iter(Axis(0)).zip(y) {
        let c = c as usize;
        counts[c] += 1;
        sums[c].iter_mut().zip(row.iter()).for_each(|(s, v)| *s += v);
    }
    for c in 0..2 {
        sums[c].iter_mut().for_each(|s| *s /= counts[c].max(1) as f64);
    }
    sums
}

/// Shared-covariance discriminant: w = (S + εI)⁻¹(μ₁ − μ₀) with S the pooled
/// within-class covariance, b = −½w·(μ₀ + μ₁) + ln(π₁/π₀).
pub fn train_lda(x: ArrayView2<'_, f64>, y: &[u8], shrinkage: f64) -> Result<LinearModel, ModelError> {
    let (n, d) = x.dim();
    let mu = class_means(x, y);
    let centred = DMatrix::from_fn(n, d, |i, j| x[[i, j]] - mu[y[i] as usize][j]);
    let mut s = centred.transpose() * &centred / ((n as f64 - 2.0).max(1.0));
    for j in 0..d {
        s[(j, j)] += shrinkage;
    }
    let diff = DVector::from_iterator(d, (0..d).map(|j| mu[1][j] - mu[0][j]));
    let w = match s.clone().cholesky() {
        Some(ch) => ch.solve(&diff),
        None => s.lu().solve(&diff).ok_or(ModelError::Singular("pooled covariance"))?,
    };
    let n1 = y.iter().filter(|&&c| c == 1).count() as f64;
    let n0 = n as f64 - n1;
    let mid: f64 = (0..d).map(|j| w[j] * 0.5 * (mu[0][j] + mu[1][j])).sum();
    Ok(LinearModel { weights: w.iter().copied().collect(), bias: -mid + (n1 / n0).ln() })
}

/// Gaussian naive Bayes with per-class, per-feature moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
    pub log_prior: [f64; 2],
}

impl GaussianNb {
    /// Variances get `var_smoothing` × the largest feature variance added.
    pub fn train(x: ArrayView2<'_, f64>, y: &[u8], var_smoothing: f64) -> Self {
        let (n, d) = x.dim();
        let mean = class_means(x, y);
        let mut var = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (row, &c) in x.axis_iter(Axis(0)).zip(y) {
            let c = c as usize;
            counts[c] += 1;
            for (j, v) in row.iter().enumerate() {
                let e = v - mean[c][j];
                var[c][j] += e * e;
            }
        }
        let mut max_var = 0.0f64;
        for j in 0..d {
            let col = x.column(j);
            let m = col.sum() / n as f64;
            max_var = max_var.max(col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64);
        }
        let eps = var_smoothing * max_var.max(f64::MIN_POSITIVE);
        for c in 0..2 {
            var[c].iter_mut().for_each(|v| *v = *v / counts[c].max(1) as f64 + eps);
        }
        let log_prior = [(counts[0] as f64 / n as f64).ln(), (counts[1] as f64 / n as f64).ln()];
        GaussianNb { mean, var, log_prior }
    }

    /// Log-likelihood ratio contribution of feature `j` at value `v`.
    pub fn term(&self, j: usize, v: f64) -> f64 {
        let ll = |c: usize| {
            let s2 = self.var[c][j];
            let e = v - self.mean[c][j];
            -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - e * e / (2.0 * s2)
        };
        ll(1) - ll(0)
    }

    pub fn log_odds(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.log_prior[1] - self.log_prior[0] + x.iter().enumerate().map(|(j, &v)| self.term(j, v)).sum::<f64>()
    }

    pub fn proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.log_odds(x))
    }
}
