//! C-SVC with an RBF kernel: SMO with second-order working-set selection
//! over a precomputed kernel matrix, and sigmoid (Platt) calibration of the
//! training decision values.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision value is Σ αᵢyᵢK(xᵢ, x) − rho.
    pub rho: f64,
    /// ½αᵀQα − Σα at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    /// The iteration cap was hit before the KKT gap closed.
    pub hit_max_iter: bool,
}

/// Solves min ½αᵀQα − eᵀα s.t. yᵀα = 0, 0 ≤ αᵢ ≤ cᵢ with Q = (yyᵀ)∘K.
///
/// `y` holds ±1; stops when the maximal KKT violation falls below `tol`.
pub fn solve_smo(k: ArrayView2<'_, f64>, y: &[f64], c: &[f64], tol: f64, max_iter: usize) -> SmoSolution {
    let n = y.len();
    assert_eq!(k.nrows(), n);
    assert_eq!(c.len(), n);
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let qd: Vec<f64> = (0..n).map(|i| k[[i, i]]).collect();
    let upper = |a: &[f64], t: usize| a[t] >= c[t];
    let lower = |a: &[f64], t: usize| a[t] <= 0.0;
    let mut iter = 0;
    let mut hit_max_iter = false;
    loop {
        // first index: maximal violating
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(&alpha, t) && -g[t] >= gmax {
                    gmax = -g[t];
                    i_sel = t;
                }
            } else if !lower(&alpha, t) && g[t] >= gmax {
                gmax = g[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for j in 0..n {
                let quad = qd[i] + qd[j] - 2.0 * k[[i, j]];
                let quad = if quad > 0.0 { quad } else { TAU };
                if y[j] > 0.0 {
                    if !lower(&alpha, j) {
                        let diff = gmax + g[j];
                        gmax2 = gmax2.max(g[j]);
                        if diff > 0.0 {
                            let obj = -diff * diff / quad;
                            if obj <= obj_min {
                                obj_min = obj;
                                j_sel = j;
                            }
                        }
                    }
                } else if !upper(&alpha, j) {
                    let diff = gmax - g[j];
                    gmax2 = gmax2.max(-g[j]);
                    if diff > 0.0 {
                        let obj = -diff * diff / quad;
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = j;
                        }
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < tol {
            break;
        }
        if iter >= max_iter {
            hit_max_iter = true;
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (ci, cj) = (c[i], c[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad_base = qd[i] + qd[j] - 2.0 * k[[i, j]];
        let quad = if quad_base > 0.0 { quad_base } else { TAU };
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (yi, yj) = (y[i], y[j]);
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            g[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    }

    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * g[t];
        if upper(&alpha, t) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(&alpha, t) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let objective = 0.5 * alpha.iter().zip(&g).map(|(a, gg)| a * (gg - 1.0)).sum::<f64>();
    SmoSolution { alpha, rho, objective, iterations: iter, hit_max_iter }
}

/// Squared Euclidean distances between the rows of `a` and of `b`.
pub fn squared_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let na: Vec<f64> = a.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let nb: Vec<f64> = b.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let mut d = a.dot(&b.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
    }
    d
}

/// Fitted sigmoid P(high | f) = 1 / (1 + exp(A·f + B)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    /// Newton fit with backtracking on regularised targets.
    pub fn fit(dec: &[f64], positive: &[bool]) -> Self {
        let prior1 = positive.iter().filter(|&&p| p).count() as f64;
        let prior0 = dec.len() as f64 - prior1;
        let hi = (prior1 + 1.0) / (prior1 + 2.0);
        let lo = 1.0 / (prior0 + 2.0);
        let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
        let objective = |a: f64, b: f64| -> f64 {
            dec.iter()
                .zip(&t)
                .map(|(&f, &ti)| {
                    let z = f * a + b;
                    if z >= 0.0 {
                        ti * z + (-z).exp().ln_1p()
                    } else {
                        (ti - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
        let mut fval = objective(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&f, &ti) in dec.iter().zip(&t) {
                let z = f * a + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = ti - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < 1e-10 {
                break;
            }
        }
        PlattScaling { a, b }
    }

    pub fn prob(&self, f: f64) -> f64 {
        let z = f * self.a + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub support: Array2<f64>,
    /// αᵢyᵢ per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt: PlattScaling,
    pub hit_max_iter: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// `None` selects 1 / (d · var(X)).
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, gamma: None, tol: 1e-3, max_iter: 10_000_000 }
    }
}

pub fn scale_gamma(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.len() as f64;
    let m = x.sum() / n;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.ncols() as f64 * var)
    } else {
        1.0
    }
}

impl SvmModel {
    pub fn train(x: ArrayView2<'_, f64>, y: &[u8], p: &SvmParams) -> Self {
        let gamma = p.gamma.unwrap_or_else(|| scale_gamma(x));
        let mut k = squared_distances(x, x);
        k.mapv_inplace(|d| (-gamma * d).exp());
        let ys: Vec<f64> = y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
        let c = vec![p.c; y.len()];
        let sol = solve_smo(k.view(), &ys, &c, p.tol, p.max_iter.max(100 * y.len()));
        if sol.hit_max_iter {
            log::warn!("SMO stopped at the iteration cap ({} iterations)", sol.iterations);
        }
        let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        let coef: Vec<f64> = sv.iter().map(|&i| sol.alpha[i] * ys[i]).collect();
        // training decision values from the kernel already in memory
        let dec: Vec<f64> = (0..y.len())
            .map(|t| sv.iter().zip(&coef).map(|(&i, &c)| c * k[[i, t]]).sum::<f64>() - sol.rho)
            .collect();
        let positive: Vec<bool> = y.iter().map(|&c| c == 1).collect();
        let platt = PlattScaling::fit(&dec, &positive);
        SvmModel {
            gamma,
            support: x.select(Axis(0), &sv),
            coef,
            rho: sol.rho,
            platt,
            hit_max_iter: sol.hit_max_iter,
        }
    }

    pub fn decision(&self, x: ArrayView1<'_, f64>) -> f64 {
        let xs: Vec<f64> = x.iter().copied().collect();
        let mut acc = 0.0;
        for (sv, &c) in self.support.axis_iter(Axis(0)).zip(&self.coef) {
            let d = match sv.as_slice() {
                Some(row) => squared_distance(row, &xs),
                None => sv.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum(),
            };
            acc += c * (-self.gamma * d).exp();
        }
        acc - self.rho
    }

    /// Decision values from precomputed squared distances to the support vectors.
    pub fn decision_from_distances(&self, d2: ArrayView1<'_, f64>) -> f64 {
        d2.iter().zip(&self.coef).map(|(&d, &c)| c * (-self.gamma * d).exp()).sum::<f64>() - self.rho
    }

    pub fn proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.platt.prob(self.decision(x))
    }
}

/// Four running sums so the loop vectorizes.
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| (p - q) * (p - q)).sum();
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            let d = p[k] - q[k];
            lanes[k] += d * d;
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_problem() {
        let k = array![[1.0, 0.2], [0.2, 1.0]];
        let sol = solve_smo(k.view(), &[1.0, -1.0], &[100.0, 100.0], 1e-9, 1000);
        assert!(sol.alpha.iter().all(|&a| a > 0.0));
        assert!((sol.alpha[0] - sol.alpha[1]).abs() < 1e-12);
        assert!(sol.rho.abs() < 1e-9);
    }

    #[test]
    fn platt_symmetry() {
        let p = PlattScaling::fit(&[1.0, -1.0, 1.2, -1.2], &[true, false, true, false]);
        assert!((p.prob(0.0) - 0.5).abs() < 1e-9);
        assert!(p.prob(1.0) > 0.5);
    }
}
