//! Small statistics toolkit for Monte Carlo estimates and goodness-of-fit.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub stderr: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Proportion with a Wilson score interval.
pub fn proportion(successes: usize, n: usize) -> Interval {
    assert!(n > 0, "empty sample");
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Interval {
        estimate: p,
        stderr: (p * (1.0 - p) / nf).sqrt(),
        lo: (centre - half).clamp(0.0, 1.0).min(p),
        hi: (centre + half).clamp(0.0, 1.0).max(p),
        n,
    }
}

/// Sample mean with a normal interval.
pub fn mean(xs: &[f64]) -> Interval {
    assert!(!xs.is_empty(), "empty sample");
    let n = xs.len() as f64;
    let m = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = if xs.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    let se = (var / n).sqrt();
    Interval { estimate: m, stderr: se, lo: m - Z95 * se, hi: m + Z95 * se, n: xs.len() }
}

/// Kolmogorov–Smirnov statistic of `sample` against the continuous CDF `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    d
}

/// Asymptotic p-value of the one-sample KS statistic, with Stephens'
/// small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    kolmogorov_survival(lambda)
}

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Total-variation distance `½ Σ |p_i - q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `½ Σ_i k sqrt(p_i (1 - p_i) / n)`: a k-sigma envelope for the TV distance
/// between an empirical multinomial law with `n` samples and its mean `p`.
pub fn multinomial_tv_bound(p: &[f64], n: usize, k: f64) -> f64 {
    0.5 * p.iter().map(|&x| k * (x.clamp(0.0, 1.0) * (1.0 - x.clamp(0.0, 1.0)) / n as f64).sqrt()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_critical_value() {
        // Q(1.9495) ≈ 0.001, Q(1.3581) ≈ 0.05
        assert!((kolmogorov_survival(1.9495) - 0.001).abs() < 2e-5);
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 2e-4);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        for (s, n) in [(0, 10), (10, 10), (3, 7), (5000, 100000)] {
            let iv = proportion(s, n);
            assert!(iv.lo <= iv.estimate && iv.estimate <= iv.hi);
        }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64 * 0.1).collect();
        assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, |x| x);
        assert!(d <= 0.5 / 1000.0 + 1e-12);
        assert!(ks_p_value(d, 1000) > 0.99);
    }
}
