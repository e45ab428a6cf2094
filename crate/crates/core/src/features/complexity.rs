use super::FeatureError;

/// Sample entropy −ln(A/B) with tolerance r = `r_factor` × SD(x).
///
/// Templates start at i = 0..N−m−1 for both lengths, distances are Chebyshev,
/// and matches are unordered pairs i < j with distance ≤ r. Templates are
/// visited in order of their first sample so that only candidates within r in
/// that coordinate are compared; the counts are exact.
///
/// When no (m+1)-match exists the value is ln(B) (as if A were 1) and the flag
/// is set; ln of the pair count is used if B is also zero.
pub fn sample_entropy(x: &[f64], m: usize, r_factor: f64) -> Result<(f64, bool), FeatureError> {
    let n = x.len();
    let needed = 10 * (m + 1);
    if n < needed {
        return Err(FeatureError::SignalTooShort { needed, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let r = r_factor * sd;
    let n_t = n - m;
    let mut order: Vec<usize> = (0..n_t).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    // sorted templates laid out contiguously, m + 1 values each
    let w = m + 1;
    let t: Vec<f64> = order.iter().flat_map(|&i| x[i..=i + m].iter().copied()).collect();
    let (mut a_count, mut b_count) = (0u64, 0u64);
    for p in 0..n_t {
        let ti = &t[p * w..(p + 1) * w];
        for tj in t[(p + 1) * w..].chunks_exact(w) {
            if tj[0] - ti[0] > r {
                break;
            }
            // branch-free: match outcomes are close to random on real signals
            let b = (1..m).fold(true, |ok, k| ok & ((ti[k] - tj[k]).abs() <= r));
            b_count += u64::from(b);
            a_count += u64::from(b & ((ti[m] - tj[m]).abs() <= r));
        }
    }
    if a_count == 0 {
        let pairs = (n_t as u64) * (n_t as u64 - 1) / 2;
        let b = if b_count > 0 { b_count } else { pairs.max(1) };
        return Ok(((b as f64).ln(), true));
    }
    Ok(((b_count as f64 / a_count as f64).ln(), false))
}

/// Higuchi fractal dimension: least-squares slope of ln L(k) against ln(1/k)
/// for k = 1..=kmax, with the normalised curve length
/// L_m(k) = (Σ|x[m+ik] − x[m+(i−1)k]|) · (N−1) / (⌊(N−1−m)/k⌋ · k) / k.
/// Flagged 0 when any L(k) is zero.
pub fn higuchi_fd(x: &[f64], kmax: usize) -> Result<(f64, bool), FeatureError> {
    let n = x.len();
    if n < 10 * kmax || kmax < 2 {
        return Err(FeatureError::SignalTooShort { needed: 10 * kmax.max(2), got: n });
    }
    let mut lx = Vec::with_capacity(kmax);
    let mut ly = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut total = 0.0;
        let mut count = 0usize;
        for m in 0..k {
            let n_max = (n - 1 - m) / k;
            if n_max == 0 {
                continue;
            }
            let mut len = 0.0;
            for i in 1..=n_max {
                len += (x[m + i * k] - x[m + (i - 1) * k]).abs();
            }
            total += len * (n - 1) as f64 / (n_max * k) as f64 / k as f64;
            count += 1;
        }
        let l = total / count as f64;
        if !(l > 0.0) || !l.is_finite() {
            return Ok((0.0, true));
        }
        lx.push((1.0 / k as f64).ln());
        ly.push(l.ln());
    }
    let mx = lx.iter().sum::<f64>() / kmax as f64;
    let my = ly.iter().sum::<f64>() / kmax as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok((sxy / sxx, false))
}
