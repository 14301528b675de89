//! Small statistical helpers shared by the checkers and verifiers.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// A Monte Carlo or numerical estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { value: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { value: mean, stderr: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self { value: mean, stderr: (var / n).sqrt() }
    }

    /// Mean and standard error from accumulated `(sum, sum of squares, count)`.
    pub fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sum_sq / nf - mean * mean).max(0.0)) * nf / (nf - 1.0).max(1.0);
        Self { value: mean, stderr: (var / nf).sqrt() }
    }

    /// Number of standard errors separating this estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.stderr
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (h * PI.ln() - ln_gamma(h + 1.0)).exp()
}

/// `Γ(a + s) / Γ(a)`.
pub fn gamma_ratio(a: f64, s: f64) -> f64 {
    (ln_gamma(a + s) - ln_gamma(a)).exp()
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// One-sample two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |acc, (i, &x)| {
        let f = cdf(x);
        let upper = (i as f64 + 1.0) / n - f;
        let lower = f - i as f64 / n;
        acc.max(upper).max(lower)
    })
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`, with the
/// Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let y = (-PI * PI / (8.0 * lambda * lambda)).exp();
        let s: f64 = (0..8).map(|j| y.powi((2 * j + 1) * (2 * j + 1))).sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_ratios() {
        assert_relative_eq!(gamma_ratio(1.0, 2.0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(gamma_ratio(2.0, 2.0), 6.0, epsilon = 1e-12);
        assert_relative_eq!(gamma_ratio(1.0, 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_relative_eq!(ln_binomial(10, 3).exp(), 120.0, epsilon = 1e-9);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Tabulated critical values: P(K > 1.358) ~ 0.05, P(K > 1.628) ~ 0.01.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 1e-3);
        // Both branches agree near the switch point.
        let a = kolmogorov_survival(1.18 - 1e-9);
        let b = kolmogorov_survival(1.18 + 1e-9);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn ks_statistic_of_perfect_grid_is_half_step() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert_relative_eq!(ks_statistic(&xs, |x| x), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn estimate_from_samples() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(e.value, 2.0);
        assert_relative_eq!(e.stderr, (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        let s = Estimate::from_sums(6.0, 14.0, 3);
        assert_relative_eq!(s.stderr, e.stderr, epsilon = 1e-12);
    }
}
