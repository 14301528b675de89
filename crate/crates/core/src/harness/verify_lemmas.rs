//! Verifiers for the order-statistic facts about the k-NN radius and the
//! catchment-area tail bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};
use statrs::function::gamma::gamma;

use super::report::{Check, VerifierReport};
use crate::error::{Error, Result};
use crate::knn::{catchment_volume, voronoi_cell_area, NnIndex};
use crate::quadrature::integrate_with_breaks;
use crate::rng;
use crate::sampling::{sample_chunked, UniformBox};
use crate::stats::{ks_pvalue, ks_statistic, unit_ball_volume, Estimate};

/// Uniform source law on `[0, 1]`, query point `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauLawConfig {
    pub x: f64,
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "default_tail_grid")]
    pub tail_grid: Vec<f64>,
    /// Ball-trace constant of the support; 1/2 for an interval.
    #[serde(default = "half")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_tail_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
}

impl TauLawConfig {
    pub fn new(x: f64, n: usize, k: usize, reps: usize, seed: u64) -> Self {
        Self { x, n, k, reps, seed, lambda: 1.0, tail_grid: default_tail_grid(), c: 0.5 }
    }

    fn mass(&self, r: f64) -> f64 {
        ((self.x + r).min(1.0) - (self.x - r).max(0.0)).clamp(0.0, 1.0)
    }
}

fn kth_distance(points: &mut [f64], x: f64, k: usize) -> f64 {
    for p in points.iter_mut() {
        *p = (*p - x).abs();
    }
    let (_, kth, _) = points.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Checks, for the k-NN radius at `x` of `n` uniform points on `[0, 1]`:
/// `F_x(τ_k) ~ Beta(k, n − k + 1)`, the moment bound (and exact moment),
/// and the exponential tail bound. Returns three reports.
pub fn verify_tau_laws(cfg: &TauLawConfig) -> Result<Vec<VerifierReport>> {
    if !(0.0..=1.0).contains(&cfg.x) || cfg.k == 0 || cfg.k > cfg.n || cfg.reps < 2 || !(cfg.lambda > 0.0) {
        return Err(Error::Config("tau-law verifier needs x in [0,1], 1 ≤ k ≤ n, reps ≥ 2, lambda > 0".into()));
    }
    let taus: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(cfg.seed, &[rep as u64]);
            let mut pts: Vec<f64> = (0..cfg.n).map(|_| r.random::<f64>()).collect();
            kth_distance(&mut pts, cfg.x, cfg.k)
        })
        .collect();

    let beta = Beta::new(cfg.k as f64, (cfg.n - cfg.k + 1) as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let transformed: Vec<f64> = taus.iter().map(|&t| cfg.mass(t)).collect();
    let d_ks = ks_statistic(&transformed, |u| beta.cdf(u));
    let p = ks_pvalue(d_ks, transformed.len());
    let beta_report = VerifierReport::new("beta_law", vec![Check::new("ks_pvalue", cfg.n as f64, p, 0.01, d_ks, p > 0.01)]);

    // Exact moment: E[τ^λ] = ∫ λ r^{λ−1} P(τ > r) dr.
    let reach = cfg.x.max(1.0 - cfg.x);
    let survival = |r: f64| 1.0 - beta.cdf(cfg.mass(r));
    let exact = integrate_with_breaks(
        |r| cfg.lambda * r.powf(cfg.lambda - 1.0) * survival(r),
        0.0,
        reach,
        &[cfg.x.min(1.0 - cfg.x)],
        1e-14,
        1e-11,
    )
    .value;
    let powers: Vec<f64> = taus.iter().map(|t| t.powf(cfg.lambda)).collect();
    let est = Estimate::from_samples(&powers);
    let vd = unit_ball_volume(1);
    let ratio = cfg.lambda;
    let bound = 2.0 * gamma(2.0 + ratio.floor()) * (cfg.c * vd).powf(-ratio) * (cfg.k as f64 / (cfg.n as f64 + 1.0)).powf(ratio);
    let moment_report = VerifierReport::new(
        "tau_moments",
        vec![
            Check::new("exact_moment", cfg.lambda, est.value, exact, est.stderr, est.z_score(exact).abs() <= 3.0),
            Check::new("moment_bound", cfg.lambda, est.value, bound, est.stderr, est.value <= bound),
        ],
    );

    let nf = cfg.reps as f64;
    let tail_checks = cfg
        .tail_grid
        .iter()
        .map(|&a| {
            let emp = taus.iter().filter(|&&t| t > a).count() as f64 / nf;
            let bound = 0.25f64.exp() * (-(cfg.n as f64 / cfg.k as f64) * cfg.c * vd * a / 8.0).exp();
            Check::new("tail_bound", a, emp, bound, (emp * (1.0 - emp) / nf).sqrt(), emp <= bound)
        })
        .collect();
    Ok(vec![beta_report, moment_report, VerifierReport::new("tau_tail", tail_checks)])
}

/// Exhaustive check of `P(N_A ≤ ℓ, N_B ≤ ℓ′) ≤ P(N_A ≤ ℓ) P(N_B ≤ ℓ′)` for
/// the counts of two disjoint cells among `n` multinomial trials.
pub fn verify_negative_correlation(p_a: f64, p_b: f64, n: u64) -> Result<VerifierReport> {
    if !(p_a >= 0.0 && p_b >= 0.0 && p_a + p_b <= 1.0 + 1e-15) || n > 60 {
        return Err(Error::invalid("cell probabilities must be non-negative with sum ≤ 1"));
    }
    let p_c = (1.0 - p_a - p_b).max(0.0);
    let nu = n as usize;
    let mut log_fact = vec![0.0f64; nu + 1];
    for i in 1..=nu {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    let pow = |p: f64, e: usize| if e == 0 { 1.0 } else { p.powi(e as i32) };
    // joint[a][b] = P(N_A = a, N_B = b).
    let mut joint = vec![vec![0.0f64; nu + 1]; nu + 1];
    for a in 0..=nu {
        for b in 0..=nu - a {
            let c = nu - a - b;
            let coef = (log_fact[nu] - log_fact[a] - log_fact[b] - log_fact[c]).exp();
            joint[a][b] = coef * pow(p_a, a) * pow(p_b, b) * pow(p_c, c);
        }
    }
    let marginal = |p: f64| -> Result<Vec<f64>> {
        let bin = Binomial::new(p.min(1.0), n).map_err(|e| Error::invalid(e.to_string()))?;
        Ok((0..=n).map(|l| bin.cdf(l)).collect())
    };
    let (fa, fb) = (marginal(p_a)?, marginal(p_b)?);
    let mut checks = Vec::with_capacity((nu + 1) * (nu + 1));
    for l in 0..=nu {
        for lp in 0..=nu {
            let lhs: f64 = (0..=l).map(|a| (0..=lp).map(|b| joint[a][b]).sum::<f64>()).sum();
            let rhs = fa[l] * fb[lp];
            checks.push(Check::new(format!("l={l},l'={lp}"), (l * (nu + 1) + lp) as f64, lhs, rhs, 0.0, lhs <= rhs + 1e-14));
        }
    }
    Ok(VerifierReport::new("negative_correlation", checks))
}

/// Uniform `P = Q` on the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatchmentTailConfig {
    pub n: usize,
    pub k: usize,
    pub t_grid: Vec<f64>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Ball-trace constant of the square; `1/(2π)` over radii up to the diameter.
    #[serde(default = "square_c")]
    pub c: f64,
    /// Inner Monte Carlo draws, used when `k > 1`.
    #[serde(default = "default_inner")]
    pub n_inner: usize,
}

fn square_c() -> f64 {
    1.0 / std::f64::consts::TAU
}
fn default_inner() -> usize {
    20_000
}

/// Empirical survival of `n Q(A_k(X_1)) / k` against the tail bound
/// `3 e^{1/4} exp(−c p_inf t / (12 q̄))`, plus the identity `E[n Q(A_k(X_1)) / k] = 1`.
/// For `k = 1` the catchment area is the Voronoi cell, computed exactly.
pub fn verify_catchment_tail(cfg: &CatchmentTailConfig) -> Result<VerifierReport> {
    if cfg.k == 0 || cfg.k > cfg.n || cfg.reps < 2 || cfg.t_grid.is_empty() {
        return Err(Error::Config("catchment verifier needs 1 ≤ k ≤ n, reps ≥ 2 and a t grid".into()));
    }
    let square = UniformBox::unit(2);
    let z: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let pts = sample_chunked(&square, cfg.n, rng::derive_seed(cfg.seed, &[rep as u64]));
            let index = NnIndex::build(pts)?;
            let q = if cfg.k == 1 {
                voronoi_cell_area(&index, 0, [0.0, 0.0], [1.0, 1.0])?
            } else {
                let x1 = index.points().row(0).to_vec();
                let inner = rng::derive_seed(cfg.seed, &[rep as u64, rng::label_hash("inner")]);
                catchment_volume(&index, &x1, cfg.k, &square, cfg.n_inner, inner)?.value
            };
            Ok(cfg.n as f64 * q / cfg.k as f64)
        })
        .collect::<Result<_>>()?;
    let (p_inf, q_sup) = (1.0, 1.0);
    let nf = z.len() as f64;
    let mut checks: Vec<Check> = cfg
        .t_grid
        .iter()
        .map(|&t| {
            let emp = z.iter().filter(|&&v| v >= t).count() as f64 / nf;
            let bound = 3.0 * 0.25f64.exp() * (-cfg.c * p_inf * t / (12.0 * q_sup)).exp();
            Check::new("survival", t, emp, bound, (emp * (1.0 - emp) / nf).sqrt(), emp <= bound)
        })
        .collect();
    let mean = Estimate::from_samples(&z);
    checks.push(Check::new("mean_normalised_volume", f64::NAN, mean.value, 1.0, mean.stderr, (0.9..=1.1).contains(&mean.value)));
    let mut report = VerifierReport::new("catchment_tail", checks);
    if cfg.k == 1 {
        report = report.with_note("k = 1: catchment areas are exact Voronoi cell areas");
    }
    Ok(report)
}
