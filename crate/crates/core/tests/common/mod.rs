#![allow(dead_code)]

pub mod dsp;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Dense oracle for min ½αᵀQα − Σα, yᵀα = 0, 0 ≤ α ≤ C, by accelerated
/// projected gradient. The projection solves for the multiplier of the
/// equality constraint by bisection.
pub fn qp_oracle(q: &Array2<f64>, y: &[f64], c: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let lip: f64 = (0..n).map(|i| (0..n).map(|j| q[[i, j]].abs()).sum::<f64>()).fold(0.0, f64::max);
    let project = |v: &[f64]| -> Vec<f64> {
        let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
        let sum = |a: &[f64]| a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>();
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum(&at(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    };
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| q[[i, j]] * a[j]).sum::<f64>() - 1.0).collect() };
    let objective = |a: &[f64]| -> f64 {
        let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * q[[i, j]] * a[j]).sum::<f64>()).sum();
        0.5 * quad - a.iter().sum::<f64>()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let nx = project(&step);
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = nx.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / nt * (a - b)).collect();
        x = nx;
        t = nt;
    }
    let obj = objective(&x);
    (x, obj)
}

pub fn rbf_kernel(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let d: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        (-gamma * d).exp()
    })
}

/// Two Gaussian blobs centred at ±(2, 2); label 1 for the positive blob.
pub fn blobs(n: usize, sd: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, _)| {
        let centre = if y[i] == 1 { 2.0 } else { -2.0 };
        centre + sd * rng.sample::<f64, _>(StandardNormal)
    });
    (x, y)
}

/// Four clouds at (±1, ±1); label 1 where the signs differ.
pub fn xor(n: usize, sd: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (sa, sb) = (if i % 2 == 0 { 1.0 } else { -1.0 }, if (i / 2) % 2 == 0 { 1.0 } else { -1.0 });
        x[[i, 0]] = sa + sd * rng.sample::<f64, _>(StandardNormal);
        x[[i, 1]] = sb + sd * rng.sample::<f64, _>(StandardNormal);
        y.push(u8::from(sa != sb));
    }
    (x, y)
}

pub fn accuracy(p: &[f64], y: &[u8]) -> f64 {
    p.iter().zip(y).filter(|(p, &y)| (**p >= 0.5) == (y == 1)).count() as f64 / y.len() as f64
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}
