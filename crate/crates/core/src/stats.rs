//! Small statistical helpers used by the validity checks.

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and Uniform[0, 1].
pub fn ks_uniform(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Lag-1 sample autocorrelation of a 0/1 sequence; 0 for constant sequences.
pub fn lag1_autocorrelation(xs: &[bool]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let v: Vec<f64> = xs.iter().map(|&b| b as u8 as f64).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let denom: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / denom
}

/// Half-width `k · sqrt(p(1-p)/n)` of a normal-approximation binomial band.
pub fn binomial_halfwidth(p: f64, n: usize, k: f64) -> f64 {
    k * (p * (1.0 - p) / n as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
