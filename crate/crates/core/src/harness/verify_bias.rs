//! Conditional-bias verifiers. The bias is computed from the closed-form
//! regression function, so outcome noise never enters.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Check, VerifierReport};
use crate::datagen::AdditivePoly;
use crate::error::{Error, Result};
use crate::estimators::{theoretical_bias_constant, BiasTerm, UniformDensity};
use crate::knn::{NnIndex, Scratch};
use crate::rng;
use crate::sampling::{sample_chunked, UniformBox};
use crate::stats::{binomial, Estimate};

/// Regression function on the line with an exact cell integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LineFunction {
    /// `intercept + Σ_p coeffs[p] x^{p+1}`.
    Polynomial { intercept: f64, coeffs: Vec<f64> },
    /// `|x − center|`.
    Kink { center: f64 },
}

impl LineFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LineFunction::Polynomial { intercept, coeffs } => {
                intercept + coeffs.iter().rev().fold(0.0, |acc, c| (acc + c) * x)
            }
            LineFunction::Kink { center } => (x - center).abs(),
        }
    }

    /// `∫_l^r (g(s) − g(x)) dx`.
    fn cell_integral(&self, s: f64, l: f64, r: f64) -> f64 {
        match self {
            LineFunction::Polynomial { intercept, coeffs } => {
                // Expand around s so that the small differences are formed directly.
                let mut a = Vec::with_capacity(coeffs.len() + 1);
                a.push(*intercept);
                a.extend_from_slice(coeffs);
                let (u0, u1) = (l - s, r - s);
                let mut total = 0.0;
                for j in 1..a.len() {
                    let b: f64 = (j..a.len()).map(|i| binomial(i as u64, j as u64) as f64 * a[i] * s.powi((i - j) as i32)).sum();
                    let e = j as i32 + 1;
                    total += b * (u1.powi(e) - u0.powi(e)) / e as f64;
                }
                -total
            }
            LineFunction::Kink { center } => {
                let anti = |x: f64| (x - center) * (x - center).abs() / 2.0;
                (s - center).abs() * (r - l) - (anti(r) - anti(l))
            }
        }
    }
}

/// Exact `∫ ((1/k) Σ_{ℓ≤k} g(X_(ℓ)(x)) − g(x)) dQ(x)` for `Q` uniform on
/// `q_range`. In one dimension the k-NN set of `x` is a window of `k`
/// consecutive order statistics, constant between window midpoints.
pub fn conditional_bias_1d(sorted: &[f64], k: usize, q_range: (f64, f64), g: &LineFunction) -> Result<f64> {
    let n = sorted.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let (qlo, qhi) = q_range;
    if !(qlo < qhi) {
        return Err(Error::invalid("q_range must have positive length"));
    }
    if sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("sample must be sorted"));
    }
    let mut total = 0.0;
    for a in 0..=n - k {
        let left = if a == 0 { f64::NEG_INFINITY } else { 0.5 * (sorted[a - 1] + sorted[a + k - 1]) };
        let right = if a + k == n { f64::INFINITY } else { 0.5 * (sorted[a] + sorted[a + k]) };
        let (l, r) = (left.max(qlo), right.min(qhi));
        if l >= r {
            continue;
        }
        total += sorted[a..a + k].iter().map(|&s| g.cell_integral(s, l, r)).sum::<f64>() / k as f64;
    }
    Ok(total / (qhi - qlo))
}

fn sorted_uniform(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    let mut xs: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    xs.sort_by(f64::total_cmp);
    xs
}

/// `P` uniform on `[0, 1]`, `Q` uniform on the interior range `q_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasExpansionConfig {
    #[serde(default = "default_g")]
    pub g: LineFunction,
    #[serde(default = "default_q_range")]
    pub q_range: (f64, f64),
    #[serde(default = "one_usize")]
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Allowed relative deviation from the theoretical constant.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_g() -> LineFunction {
    LineFunction::Polynomial { intercept: 0.0, coeffs: vec![0.0, 1.0] }
}
fn default_q_range() -> (f64, f64) {
    (0.25, 0.75)
}
fn one_usize() -> usize {
    1
}
fn default_tolerance() -> f64 {
    0.15
}

impl BiasExpansionConfig {
    pub fn new(k: usize, n_grid: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self { g: default_g(), q_range: default_q_range(), k, n_grid, reps, seed, tolerance: default_tolerance() }
    }
}

/// Compares `n² · mean(B_n)` with the theoretical constant at every `n`.
/// When the constant is zero the check is a 3-standard-error test of zero.
pub fn verify_bias_expansion(cfg: &BiasExpansionConfig) -> Result<VerifierReport> {
    let (intercept, coeffs) = match &cfg.g {
        LineFunction::Polynomial { intercept, coeffs } => (*intercept, coeffs.clone()),
        LineFunction::Kink { .. } => return Err(Error::Config("bias expansion needs a polynomial regression function".into())),
    };
    let (qlo, qhi) = cfg.q_range;
    if !(0.0 < qlo && qlo < qhi && qhi < 1.0) {
        return Err(Error::Config("q_range must lie strictly inside (0, 1)".into()));
    }
    if cfg.reps < 2 || cfg.n_grid.is_empty() {
        return Err(Error::Config("bias expansion needs reps ≥ 2 and a non-empty n grid".into()));
    }
    let p = UniformDensity::new(vec![0.0], vec![1.0])?;
    let q = UniformDensity::new(vec![qlo], vec![qhi])?;
    let jet = AdditivePoly::in_first(intercept, coeffs);
    let constant = theoretical_bias_constant(&p, &q, (&[qlo], &[qhi]), &jet, BiasTerm::Psi2, cfg.k, 0, cfg.seed)?.value;

    let mut checks = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let scale = (n as f64).powi(2);
        let scaled: Vec<f64> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let xs = sorted_uniform(n, rng::derive_seed(cfg.seed, &[n as u64, rep as u64]));
                conditional_bias_1d(&xs, cfg.k, cfg.q_range, &cfg.g).map(|b| b * scale)
            })
            .collect::<Result<_>>()?;
        let est = Estimate::from_samples(&scaled);
        let passed = if constant == 0.0 {
            est.value.abs() <= 3.0 * est.stderr
        } else {
            (est.value / constant - 1.0).abs() <= cfg.tolerance
        };
        checks.push(Check::new("scaled_mean_bias", n as f64, est.value, constant, est.stderr, passed));
    }
    Ok(VerifierReport::new("bias_expansion", checks).with_note("first-order expansion only, d = 1"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRegime {
    /// `g(x) = |x − 1/2|` in `d = 1`: `E|B_n| (n/k)^{1/d}` stays bounded.
    Lipschitz,
    /// Smooth `g` on the unit square: `E[B_n²] (n/k)^{4/d}` stays bounded.
    Smooth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasRateConfig {
    pub regime: RateRegime,
    #[serde(default = "one_usize")]
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inner Monte Carlo draws per replication in the smooth regime.
    #[serde(default = "default_inner")]
    pub n_inner: usize,
}

fn default_inner() -> usize {
    200_000
}

impl BiasRateConfig {
    pub fn new(regime: RateRegime, n_grid: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self { regime, k: 1, n_grid, reps, seed, n_inner: default_inner() }
    }
}

/// `g(x) = x_1² + x_2` on `[0, 1]²` with `Q` uniform on `[1/4, 3/4]²`. The
/// inner estimate of `B` is squared and corrected by its own variance, so
/// the returned value is unbiased for `B²`.
fn smooth_squared_bias(n: usize, k: usize, n_inner: usize, seed: u64) -> Result<f64> {
    let g = AdditivePoly { intercept: 0.0, coeffs: vec![vec![0.0, 1.0], vec![1.0]] };
    let index = NnIndex::build(sample_chunked(&UniformBox::unit(2), n, seed))?;
    let q = UniformBox::new(vec![0.25, 0.25], vec![0.75, 0.75])?;
    let inner = sample_chunked(&q, n_inner, rng::derive_seed(seed, &[rng::label_hash("inner")]));
    let (sum, sum_sq) = inner
        .iter()
        .collect::<Vec<_>>()
        .par_chunks(rng::CHUNK)
        .map(|chunk| {
            let mut scratch = Scratch::default();
            let mut nbrs = Vec::with_capacity(k);
            let (mut s, mut s2) = (0.0, 0.0);
            for x in chunk {
                index.nearest_into(x, k, &mut scratch, &mut nbrs);
                let fit = nbrs.iter().map(|nb| g.eval(index.points().row(nb.index))).sum::<f64>() / k as f64;
                let diff = fit - g.eval(x);
                s += diff;
                s2 += diff * diff;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let m = n_inner as f64;
    let mean = sum / m;
    let var = (sum_sq - m * mean * mean) / (m - 1.0);
    Ok(mean * mean - var / m)
}

/// Scaled bias moment at every `n`; passes when no step up the grid rises
/// by more than three combined standard errors.
pub fn verify_bias_rate(cfg: &BiasRateConfig) -> Result<VerifierReport> {
    if cfg.reps < 2 || cfg.n_grid.is_empty() || cfg.k == 0 {
        return Err(Error::Config("bias rate needs k ≥ 1, reps ≥ 2 and a non-empty n grid".into()));
    }
    if cfg.regime == RateRegime::Smooth && cfg.n_inner < 2 {
        return Err(Error::Config("smooth regime needs n_inner ≥ 2".into()));
    }
    let kink = LineFunction::Kink { center: 0.5 };
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        if cfg.k > n {
            return Err(Error::KOutOfRange { k: cfg.k, n });
        }
        let ratio = n as f64 / cfg.k as f64;
        let values: Vec<f64> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = rng::derive_seed(cfg.seed, &[n as u64, rep as u64]);
                match cfg.regime {
                    RateRegime::Lipschitz => {
                        let xs = sorted_uniform(n, seed);
                        conditional_bias_1d(&xs, cfg.k, default_q_range(), &kink).map(|b| b.abs() * ratio)
                    }
                    RateRegime::Smooth => smooth_squared_bias(n, cfg.k, cfg.n_inner, seed).map(|b2| b2 * ratio * ratio),
                }
            })
            .collect::<Result<_>>()?;
        points.push((n, Estimate::from_samples(&values)));
    }
    let mut checks = Vec::with_capacity(points.len());
    for (i, &(n, est)) in points.iter().enumerate() {
        let passed = match i.checked_sub(1).map(|j| points[j].1) {
            Some(prev) => est.value - prev.value <= 3.0 * (est.stderr.powi(2) + prev.stderr.powi(2)).sqrt(),
            None => true,
        };
        let reference = if i == 0 { est.value } else { points[i - 1].1.value };
        checks.push(Check::new("scaled_bias_moment", n as f64, est.value, reference, est.stderr, passed));
    }
    let name = match cfg.regime {
        RateRegime::Lipschitz => "bias_rate_lipschitz",
        RateRegime::Smooth => "bias_rate_smooth",
    };
    Ok(VerifierReport::new(name, checks))
}
