use std::f64::consts::PI;

use nocisense::features::dwt::DB4_DEC_LO;

/// Every unordered template pair, Chebyshev distance, no pruning.
pub fn naive_sampen(x: &[f64], m: usize, r_factor: f64) -> Option<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let r = r_factor * (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (mut a, mut b) = (0u64, 0u64);
    for i in 0..n - m {
        for j in i + 1..n - m {
            let dm = (0..m).map(|k| (x[i + k] - x[j + k]).abs()).fold(0.0, f64::max);
            if dm <= r {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    (a > 0).then(|| -((a as f64) / (b as f64)).ln())
}

/// Higuchi curve lengths computed term by term, slope by closed-form regression.
pub fn naive_higuchi(x: &[f64], kmax: usize) -> f64 {
    let n = x.len();
    let pts: Vec<(f64, f64)> = (1..=kmax)
        .map(|k| {
            let lens: Vec<f64> = (0..k)
                .map(|m| {
                    let steps = (n - 1 - m) / k;
                    let sum: f64 = (1..=steps).map(|i| (x[m + i * k] - x[m + (i - 1) * k]).abs()).sum();
                    sum * (n - 1) as f64 / (steps * k) as f64 / k as f64
                })
                .collect();
            ((1.0 / k as f64).ln(), (lens.iter().sum::<f64>() / k as f64).ln())
        })
        .collect();
    let kf = kmax as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 * p.0, b + p.0 * p.1));
    (kf * sxy - sx * sy) / (kf * sxx - sx * sx)
}

/// One analysis level as circular convolution with the reversed filter,
/// sampled at phase L−1.
pub fn conv_level(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    let full: Vec<f64> = (0..n).map(|t| (0..l).map(|i| h[l - 1 - i] * x[(t + n * l - i) % n]).sum()).collect();
    (0..n / 2).map(|k| full[(2 * k + l - 1) % n]).collect()
}

pub fn pyramid(x: &[f64], levels: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let h = DB4_DEC_LO.to_vec();
    let g: Vec<f64> = (0..8).map(|n| if n % 2 == 0 { h[7 - n] } else { -h[7 - n] }).collect();
    let mut a = x.to_vec();
    let mut ds = Vec::new();
    for _ in 0..levels {
        ds.push(conv_level(&a, &g));
        a = conv_level(&a, &h);
    }
    (ds, a)
}

pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    x.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

/// Amplitude of the best-fitting a·sin + b·cos + c at `f`, by normal equations.
pub fn fitted_amplitude(x: &[f64], f: f64, fs: f64) -> f64 {
    let basis: Vec<[f64; 3]> = (0..x.len())
        .map(|i| {
            let w = 2.0 * PI * f * i as f64 / fs;
            [w.sin(), w.cos(), 1.0]
        })
        .collect();
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = nalgebra::Vector3::<f64>::zeros();
    for (row, &y) in basis.iter().zip(x) {
        for i in 0..3 {
            b[i] += row[i] * y;
            for j in 0..3 {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    let c = a.lu().solve(&b).unwrap();
    c[0].hypot(c[1])
}

pub fn interior(x: &[f64], trim: usize) -> &[f64] {
    &x[trim..x.len() - trim]
}

pub fn db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// Lag in −max..=max maximising the cross-correlation Σ x[i]·y[i+lag].
pub fn peak_lag(x: &[f64], y: &[f64], max: isize) -> isize {
    (-max..=max)
        .max_by(|&a, &b| {
            let c = |lag: isize| -> f64 {
                (0..x.len() as isize)
                    .filter(|&i| i + lag >= 0 && ((i + lag) as usize) < y.len())
                    .map(|i| x[i as usize] * y[(i + lag) as usize])
                    .sum()
            };
            c(a).total_cmp(&c(b))
        })
        .unwrap()
}
