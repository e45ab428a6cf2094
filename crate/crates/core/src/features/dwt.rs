use super::FeatureError;

/// Daubechies-4 (8-tap) decomposition low-pass.
pub const DB4_DEC_LO: [f64; 8] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

/// Quadrature-mirror high-pass: g[n] = (−1)ⁿ h[L−1−n].
pub fn db4_dec_hi() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (n, v) in g.iter_mut().enumerate() {
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        *v = s * DB4_DEC_LO[7 - n];
    }
    g
}

/// One analysis step with periodic extension:
/// a[k] = Σⱼ h[j]·x[(2k+j) mod N], d[k] likewise with g.
/// Odd-length input is first extended by repeating its last sample.
pub fn dwt_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut buf;
    let x = if x.len() % 2 == 1 {
        buf = x.to_vec();
        buf.push(*x.last().expect("non-empty"));
        &buf[..]
    } else {
        x
    };
    let n = x.len();
    let g = db4_dec_hi();
    let half = n / 2;
    let mut a = Vec::with_capacity(half);
    let mut d = Vec::with_capacity(half);
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for j in 0..8 {
            let v = x[(2 * k + j) % n];
            sa += DB4_DEC_LO[j] * v;
            sd += g[j] * v;
        }
        a.push(sa);
        d.push(sd);
    }
    (a, d)
}

/// Multi-level decomposition: details d1..dL (finest first) and approximation aL.
pub fn dwt_decompose(x: &[f64], levels: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), FeatureError> {
    let needed = (1usize << levels) * DB4_DEC_LO.len();
    if x.len() < needed {
        return Err(FeatureError::SignalTooShort { needed, got: x.len() });
    }
    let mut details = Vec::with_capacity(levels);
    let mut approx = x.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx);
        details.push(d);
        approx = a;
    }
    Ok((details, approx))
}

/// Mean absolute coefficient of d1..dL and aL (L + 1 values).
pub fn dwt_energies(x: &[f64], levels: usize) -> Result<Vec<f64>, FeatureError> {
    let (details, approx) = dwt_decompose(x, levels)?;
    let mav = |c: &[f64]| c.iter().map(|v| v.abs()).sum::<f64>() / c.len() as f64;
    let mut out: Vec<f64> = details.iter().map(|d| mav(d)).collect();
    out.push(mav(&approx));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_are_orthonormal() {
        let g = db4_dec_hi();
        let hh: f64 = DB4_DEC_LO.iter().map(|v| v * v).sum();
        let hg: f64 = DB4_DEC_LO.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert!((hh - 1.0).abs() < 1e-12);
        assert!(hg.abs() < 1e-12);
        assert!((DB4_DEC_LO.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_signal() {
        assert_eq!(dwt_energies(&[0.0; 256], 4).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn odd_length_padding() {
        let (a, d) = dwt_step(&[1.0; 17]);
        assert_eq!(a.len(), 9);
        assert_eq!(d.len(), 9);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_short() {
        assert!(dwt_energies(&[0.0; 127], 4).is_err());
    }
}
