use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::datagen::{AdditivePoly, AteDgpSpec};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_rect};
use crate::rng::{self, label_hash};
use crate::sampling::{PointSampler, UniformBox};
use crate::stats::{gamma_ratio, unit_ball_volume, Estimate};

/// A density with its gradient.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Gradient and Laplacian of a smooth function.
pub trait LocalJet: Sync {
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn laplacian(&self, x: &[f64]) -> f64;
}

impl LocalJet for AdditivePoly {
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        AdditivePoly::gradient(self, x)
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        self.hessian_diag(x).iter().sum()
    }
}

/// Uniform density on an axis-aligned box.
#[derive(Clone, Debug)]
pub struct UniformDensity {
    support: UniformBox,
}

impl UniformDensity {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Ok(Self { support: UniformBox::new(lower, upper)? })
    }

    pub fn lower(&self) -> &[f64] {
        self.support.lower()
    }

    pub fn upper(&self) -> &[f64] {
        self.support.upper()
    }
}

impl Density for UniformDensity {
    fn dim(&self) -> usize {
        self.support.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let inside = x
            .iter()
            .zip(self.support.lower().iter().zip(self.support.upper()))
            .all(|(v, (l, u))| l <= v && v <= u);
        if inside {
            1.0 / self.support.volume()
        } else {
            0.0
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// Which first-order term the constant describes: the regression part
/// (`Ψ₂`, built from `g`) or the conditional-law part (`Ψ₁`, built from the
/// second-argument derivatives of `Δ` on the diagonal).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasTerm {
    Psi1,
    Psi2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasConstant {
    pub value: f64,
    pub term: BiasTerm,
    /// `(1/k) Σ_{ℓ≤k} Γ(ℓ + 2/d) / Γ(ℓ)`.
    pub gamma_factor: f64,
    /// `∫ (p |V^d|)^{−2/d} Ψ dQ`.
    pub integral: Estimate,
}

pub fn gamma_factor(k: usize, d: usize) -> f64 {
    let s = 2.0 / d as f64;
    (1..=k).map(|l| gamma_ratio(l as f64, s)).sum::<f64>() / k as f64
}

/// Leading constant `C` of the first-order bias: `n^{2/d} E[B_n] → C`.
///
/// `Ψ(x) = (1/d) (∇f·∇p/p + Δf/2)` uses the identity `∫ θθᵀ dσ = σ(S^{d−1}) I / d`.
/// The integral is computed by adaptive quadrature over `q_box` for `d ≤ 2`
/// and by `n_mc` uniform draws over `q_box` otherwise.
#[allow(clippy::too_many_arguments)]
pub fn theoretical_bias_constant(
    p: &dyn Density,
    q: &dyn Density,
    q_box: (&[f64], &[f64]),
    jet: &dyn LocalJet,
    term: BiasTerm,
    k: usize,
    n_mc: usize,
    seed: u64,
) -> Result<BiasConstant> {
    let d = p.dim();
    if q.dim() != d || q_box.0.len() != d || q_box.1.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.dim() });
    }
    if k == 0 {
        return Err(Error::KOutOfRange { k, n: 0 });
    }
    let vd = unit_ball_volume(d);
    let df = d as f64;
    let bad: Cell<Option<(Vec<f64>, f64)>> = Cell::new(None);
    let integrand = |x: &[f64]| -> f64 {
        let qx = q.value(x);
        if qx == 0.0 {
            return 0.0;
        }
        let px = p.value(x);
        if !(px > 0.0) {
            bad.set(Some((x.to_vec(), px)));
            return 0.0;
        }
        let gp = p.gradient(x);
        let gf = jet.gradient(x);
        let dot: f64 = gf.iter().zip(&gp).map(|(a, b)| a * b).sum();
        let psi = (dot / px + 0.5 * jet.laplacian(x)) / df;
        (px * vd).powf(-2.0 / df) * psi * qx
    };
    let (lo, hi) = q_box;
    let integral = match d {
        1 => {
            let r = integrate(|t| integrand(&[t]), lo[0], hi[0], 1e-12, 1e-10);
            Estimate { value: r.value, stderr: r.error }
        }
        2 => {
            let r = integrate_rect(|a, b| integrand(&[a, b]), (lo[0], hi[0]), (lo[1], hi[1]), 1e-10, 1e-9);
            Estimate { value: r.value, stderr: r.error }
        }
        _ => {
            if n_mc < 1000 {
                return Err(Error::invalid("Monte Carlo bias constant needs at least 1000 draws"));
            }
            let support = UniformBox::new(lo.to_vec(), hi.to_vec())?;
            let vol = support.volume();
            let mut r = rng::stream(seed, &[label_hash("bias-constant")]);
            let mut x = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n_mc {
                support.sample_into(&mut r, &mut x);
                let v = vol * integrand(&x);
                s += v;
                s2 += v * v;
            }
            Estimate::from_sums(s, s2, n_mc)
        }
    };
    if let Some((point, value)) = bad.take() {
        return Err(Error::NonPositiveDensity { point, value });
    }
    let gamma = gamma_factor(k, d);
    Ok(BiasConstant {
        value: gamma * integral.value,
        term,
        gamma_factor: gamma,
        integral: Estimate { value: integral.value, stderr: gamma * integral.stderr },
    })
}

/// `σ² = E[σ₁²/e(X) + σ₀²/(1 − e(X)) + (g₁(X) − g₀(X) − τ)²]`, the
/// asymptotic variance of `√N (μ̂ − τ)`. Quadrature for `d ≤ 2`, otherwise
/// `n_mc` Monte Carlo draws.
pub fn semiparametric_variance(spec: &AteDgpSpec, n_mc: usize, seed: u64) -> Result<Estimate> {
    spec.validate()?;
    let tau = spec.true_tau();
    let f = |x: &[f64]| {
        let e = spec.propensity.eval(x);
        let diff = spec.g1.eval(x) - spec.g0.eval(x) - tau;
        spec.sigma1 * spec.sigma1 / e + spec.sigma0 * spec.sigma0 / (1.0 - e) + diff * diff
    };
    let (lo, hi) = (spec.lo, spec.hi);
    let width = hi - lo;
    Ok(match spec.d {
        1 => {
            let r = integrate(|t| f(&[t]), lo, hi, 1e-13, 1e-12);
            Estimate { value: r.value / width, stderr: r.error / width }
        }
        2 => {
            let r = integrate_rect(|a, b| f(&[a, b]), (lo, hi), (lo, hi), 1e-11, 1e-10);
            let area = width * width;
            Estimate { value: r.value / area, stderr: r.error / area }
        }
        d => {
            if n_mc == 0 {
                return Err(Error::invalid("Monte Carlo variance needs draws"));
            }
            let support = UniformBox::new(vec![lo; d], vec![hi; d])?;
            let mut r = rng::stream(seed, &[label_hash("semiparametric-variance")]);
            let mut x = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n_mc {
                support.sample_into(&mut r, &mut x);
                let v = f(&x);
                s += v;
                s2 += v * v;
            }
            Estimate::from_sums(s, s2, n_mc)
        }
    })
}
