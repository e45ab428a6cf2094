//! Rational-ratio polyphase resampling with a Kaiser-windowed anti-alias FIR.

use std::f64::consts::PI;

use super::window::kaiser;

const KAISER_BETA: f64 = 5.0;
/// Half filter length in units of max(up, down).
const HALF_LEN_FACTOR: usize = 20;
/// Cutoff as a fraction of the lower Nyquist rate.
const CUTOFF_FRACTION: f64 = 0.9;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduced integer ratio up/down with `to_fs / from_fs == up / down` (to 1e-3 Hz).
pub fn rational_ratio(from_fs: f64, to_fs: f64) -> (usize, usize) {
    let f = (from_fs * 1000.0).round() as u64;
    let t = (to_fs * 1000.0).round() as u64;
    let g = gcd(f, t).max(1);
    ((t / g) as usize, (f / g) as usize)
}

#[derive(Debug, Clone)]
pub struct PolyphaseResampler {
    up: usize,
    down: usize,
    half: usize,
    taps: Vec<f64>,
}

impl PolyphaseResampler {
    pub fn new(from_fs: f64, to_fs: f64) -> Self {
        assert!(from_fs > 0.0 && to_fs > 0.0, "sampling rates must be positive");
        let (up, down) = rational_ratio(from_fs, to_fs);
        if up == down {
            return PolyphaseResampler { up: 1, down: 1, half: 0, taps: vec![1.0] };
        }
        let m = up.max(down);
        let half = HALF_LEN_FACTOR * m;
        let len = 2 * half + 1;
        // cutoff in cycles per (upsampled) sample
        let fc = 0.5 * CUTOFF_FRACTION / m as f64;
        let w = kaiser(len, KAISER_BETA);
        let mut taps: Vec<f64> = (0..len)
            .map(|k| {
                let t = k as f64 - half as f64;
                let sinc = if t == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * t).sin() / (PI * t) };
                sinc * w[k]
            })
            .collect();
        let s: f64 = taps.iter().sum();
        let gain = up as f64 / s;
        taps.iter_mut().for_each(|v| *v *= gain);
        PolyphaseResampler { up, down, half, taps }
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn is_identity(&self) -> bool {
        self.up == self.down
    }

    pub fn output_len(&self, n: usize) -> usize {
        ((n * self.up) as f64 / self.down as f64).round() as usize
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        if self.is_identity() {
            return x.to_vec();
        }
        let n = x.len();
        let n_out = self.output_len(n);
        let (up, down, half) = (self.up as i64, self.down as i64, self.half as i64);
        let len = self.taps.len() as i64;
        let mut out = Vec::with_capacity(n_out);
        for m in 0..n_out as i64 {
            let centre = m * down + half;
            // k = centre - i*up must lie in [0, len)
            let i_lo = (centre - (len - 1) + up - 1).div_euclid(up).max(0);
            let i_hi = centre.div_euclid(up).min(n as i64 - 1);
            let mut acc = 0.0;
            let mut i = i_lo;
            while i <= i_hi {
                acc += x[i as usize] * self.taps[(centre - i * up) as usize];
                i += 1;
            }
            out.push(acc);
        }
        out
    }
}

/// One-shot resampling; identity (bit-exact copy) when the rates match.
pub fn resample_polyphase(x: &[f64], from_fs: f64, to_fs: f64) -> Vec<f64> {
    PolyphaseResampler::new(from_fs, to_fs).process(x)
}
