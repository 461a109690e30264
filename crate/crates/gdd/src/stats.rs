//! Small statistical helpers for validation: Kolmogorov-Smirnov distances
//! with asymptotic critical values, distribution-free quantile confidence
//! intervals, and binomial error bars.

/// One-sample KS statistic `sup |F_emp - F|` for an ascending sample.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - (i as f64) / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Two-sample KS statistic for two ascending samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov critical coefficient `sqrt(-ln(alpha/2) / 2)`;
/// 1.6276 at the 1% level, 1.3581 at 5%.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// One-sample KS critical value at level `alpha` for sample size `n`.
pub fn ks_critical_one(alpha: f64, n: usize) -> f64 {
    ks_coefficient(alpha) / (n as f64).sqrt()
}

/// Two-sample KS critical value at level `alpha` for sizes `n`, `m`.
pub fn ks_critical_two(alpha: f64, n: usize, m: usize) -> f64 {
    ks_coefficient(alpha) * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Distribution-free confidence interval for the `level` quantile of a
/// sorted sample: order statistics at `n*level -/+ z*sqrt(n*level*(1-level))`.
pub fn quantile_ci(sorted: &[f64], level: f64, z: f64) -> (f64, f64) {
    let n = sorted.len();
    assert!(n > 0 && (0.0..1.0).contains(&level));
    let center = n as f64 * level;
    let spread = z * (n as f64 * level * (1.0 - level)).sqrt();
    let lo_rank = (center - spread).floor().max(1.0) as usize;
    let hi_rank = ((center + spread).ceil() as usize).clamp(1, n);
    (sorted[lo_rank - 1], sorted[hi_rank - 1])
}

/// Empirical quantile by the ceiling order statistic `x_(ceil(n*level))`.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0 && (0.0..1.0).contains(&level));
    let rank = ((n as f64 * level).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// `z`-sigma binomial half-width `z * sqrt(p(1-p)/n)`.
pub fn binomial_halfwidth(p: f64, n: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_uniform_grid_is_small() {
        let n = 1000;
        let sample: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&sample, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12, "d = {d}");
    }

    #[test]
    fn ks_detects_shifted_distribution() {
        let n = 1000;
        let sample: Vec<f64> = (0..n).map(|i| 0.5 * (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&sample, |x| x.clamp(0.0, 1.0));
        assert!(d > 0.4, "d = {d}");
    }

    #[test]
    fn two_sample_ks_of_identical_samples_is_zero() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn critical_coefficients() {
        assert!((ks_coefficient(0.01) - 1.6276).abs() < 1e-3);
        assert!((ks_coefficient(0.05) - 1.3581).abs() < 1e-3);
    }

    #[test]
    fn quantile_order_statistic_indexing() {
        let sorted: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        // ceil(100 * 0.999) = 100 -> largest order statistic
        assert_eq!(quantile(&sorted, 0.999), 100.0);
        assert_eq!(quantile(&sorted, 0.5), 50.0);
        let (lo, hi) = quantile_ci(&sorted, 0.5, 3.0);
        assert!(lo < 50.0 && hi > 50.0);
    }
}
