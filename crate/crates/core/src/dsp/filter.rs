//! FIR design, biquad sections and forward-backward (zero-phase) filtering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;

use super::window::hamming;
use super::{fft_forward, fft_inverse};

/// Windowed-sinc (Hamming) low-pass with unit DC gain.
pub fn design_fir_lowpass(num_taps: usize, cutoff_hz: f64, fs: f64) -> Vec<f64> {
    let fc = cutoff_hz / fs;
    let c = (num_taps - 1) as f64 / 2.0;
    let w = hamming(num_taps);
    let mut h: Vec<f64> = (0..num_taps)
        .map(|k| {
            let t = k as f64 - c;
            let sinc = if t == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * t).sin() / (PI * t) };
            sinc * w[k]
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// High-pass by spectral inversion of the low-pass; `num_taps` must be odd.
pub fn design_fir_highpass(num_taps: usize, cutoff_hz: f64, fs: f64) -> Vec<f64> {
    assert!(num_taps % 2 == 1, "high-pass FIR needs an odd tap count");
    let mut h = design_fir_lowpass(num_taps, cutoff_hz, fs);
    h.iter_mut().for_each(|v| *v = -*v);
    h[num_taps / 2] += 1.0;
    h
}

/// Second-order IIR section, coefficients normalised so that `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        let a0 = a[0];
        Biquad { b: [b[0] / a0, b[1] / a0, b[2] / a0], a: [1.0, a[1] / a0, a[2] / a0] }
    }

    /// Notch at `f0` with quality factor `q` (bilinear transform, prewarped).
    pub fn notch(f0: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let cw = w0.cos();
        Self::normalized([1.0, -2.0 * cw, 1.0], [1.0 + alpha, -2.0 * cw, 1.0 - alpha])
    }

    /// Second-order Butterworth high-pass.
    pub fn highpass(fc: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cw = w0.cos();
        Self::normalized(
            [(1.0 + cw) / 2.0, -(1.0 + cw), (1.0 + cw) / 2.0],
            [1.0 + alpha, -2.0 * cw, 1.0 - alpha],
        )
    }

    /// Second-order Butterworth low-pass.
    pub fn lowpass(fc: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cw = w0.cos();
        Self::normalized([(1.0 - cw) / 2.0, 1.0 - cw, (1.0 - cw) / 2.0], [1.0 + alpha, -2.0 * cw, 1.0 - alpha])
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -2.0 * PI * f / fs);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (1.0 + z1 * self.a[1] + z2 * self.a[2])
    }

    /// Initial state for a unit step held since -∞ (transposed direct form II).
    fn zi(&self) -> [f64; 2] {
        let g = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let z1 = self.b[2] - self.a[2] * g;
        let z0 = self.b[1] - self.a[1] * g + z1;
        [z0, z1]
    }

    fn run(&self, x: &mut [f64], x0: f64) {
        let zi = self.zi();
        let (mut z0, mut z1) = (zi[0] * x0, zi[1] * x0);
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z0;
            z0 = b1 * xin - a1 * y + z1;
            z1 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

/// A linear time-invariant stage that can be run forward-backward.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Fir(Vec<f64>),
    Biquad(Biquad),
}

impl Stage {
    pub fn order_len(&self) -> usize {
        match self {
            Stage::Fir(t) => t.len(),
            Stage::Biquad(_) => 3,
        }
    }

    /// Single causal pass with steady-state initial conditions scaled by `x[0]`.
    fn run(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        let x0 = x[0];
        match self {
            Stage::Biquad(bq) => bq.run(x, x0),
            Stage::Fir(taps) => fir_run(taps, x, x0),
        }
    }

    /// Magnitude response at `f` Hz of a single pass.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        match self {
            Stage::Biquad(bq) => bq.response(f, fs).norm(),
            Stage::Fir(taps) => {
                let w = -2.0 * PI * f / fs;
                taps.iter()
                    .enumerate()
                    .map(|(k, &h)| Complex::from_polar(h, w * k as f64))
                    .sum::<Complex<f64>>()
                    .norm()
            }
        }
    }
}

fn fir_run(taps: &[f64], x: &mut [f64], x0: f64) {
    let n = x.len();
    let m = taps.len();
    let y: Vec<f64> = if m <= 64 || n < 256 {
        (0..n)
            .map(|i| {
                let kmax = i.min(m - 1);
                (0..=kmax).map(|k| taps[k] * x[i - k]).sum()
            })
            .collect()
    } else {
        fft_convolve(x, taps, n)
    };
    x.copy_from_slice(&y);
    // steady-state state contribution: zi[k] = sum_{j>k} taps[j]
    let mut tail: f64 = taps.iter().sum::<f64>();
    for (k, v) in x.iter_mut().enumerate().take(m - 1) {
        tail -= taps[k];
        *v += tail * x0;
    }
}

/// First `n_out` samples of the linear convolution `x * h`.
fn fft_convolve(x: &[f64], h: &[f64], n_out: usize) -> Vec<f64> {
    let nfft = (x.len() + h.len() - 1).next_power_of_two();
    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(nfft, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(nfft, Complex::new(0.0, 0.0));
    let fwd = fft_forward(nfft);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    fft_inverse(nfft).process(&mut a);
    let scale = 1.0 / nfft as f64;
    a.iter().take(n_out).map(|c| c.re * scale).collect()
}

/// Odd (point-reflection) extension by `pad` samples on each side.
fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(2.0 * x[0] - x[i]);
    }
    out.extend_from_slice(x);
    for i in 1..=pad {
        out.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    out
}

/// Zero-phase application of one stage: odd-reflection padding, forward pass,
/// backward pass, trim. `pad` must be smaller than the signal length.
pub fn filtfilt(stage: &Stage, x: &[f64], pad: usize) -> Vec<f64> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let pad = pad.min(x.len() - 1);
    let mut ext = odd_extend(x, pad);
    stage.run(&mut ext);
    ext.reverse();
    stage.run(&mut ext);
    ext.reverse();
    ext[pad..pad + x.len()].to_vec()
}

/// Runs several stages forward-backward in sequence.
pub fn filtfilt_chain(stages: &[Stage], x: &[f64], pad: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in stages {
        y = filtfilt(s, &y, pad);
    }
    y
}
