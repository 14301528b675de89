//! Data-generating processes: the truncated-normal covariate-shift setups,
//! the observational treatment-effect design, and the oracles for their true
//! targets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::quadrature::integrate_with_breaks;
use crate::rng::{self, label_hash, SimRng};
use crate::sample::{AteSample, LabeledSample};
use crate::stats::Estimate;

const NOISE_SD: f64 = 0.1;

/// Normal law conditioned on `[lo, hi]`, sampled by inverse CDF.
#[derive(Clone, Debug)]
pub struct TruncatedNormal {
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    // Sampling runs on the side of the mode where the CDF has full precision.
    flip: bool,
    std: Normal,
    a: f64,
    b: f64,
    mass: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !(lo < hi) || !mu.is_finite() {
            return Err(Error::invalid(format!("degenerate truncated normal ({mu}, {sigma}, [{lo}, {hi}])")));
        }
        let std = Normal::standard();
        let (za, zb) = ((lo - mu) / sigma, (hi - mu) / sigma);
        let flip = za > 0.0;
        let (a, b) = if flip { (std.cdf(-zb), std.cdf(-za)) } else { (std.cdf(za), std.cdf(zb)) };
        let mass = b - a;
        if !(mass > 0.0) {
            return Err(Error::invalid("truncation interval carries no normal mass"));
        }
        Ok(Self { mu, sigma, lo, hi, flip, std, a, b, mass })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let z = if self.flip {
            -self.std.inverse_cdf(self.a + (1.0 - u) * self.mass)
        } else {
            self.std.inverse_cdf(self.a + u * self.mass)
        };
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let z = (x - self.mu) / self.sigma;
        if self.flip {
            (self.b - self.std.cdf(-z)) / self.mass
        } else {
            (self.std.cdf(z) - self.a) / self.mass
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        self.std.pdf((x - self.mu) / self.sigma) / (self.sigma * self.mass)
    }

    /// `μ + σ (φ(α) − φ(β)) / (Φ(β) − Φ(α))`.
    pub fn mean(&self) -> f64 {
        let pa = self.std.pdf((self.lo - self.mu) / self.sigma);
        let pb = self.std.pdf((self.hi - self.mu) / self.sigma);
        self.mu + self.sigma * (pa - pb) / self.mass
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

pub fn sample_truncated_normal(mu: f64, sigma: f64, lo: f64, hi: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let tn = TruncatedNormal::new(mu, sigma, lo, hi)?;
    let mut r = rng::stream(seed, &[]);
    Ok((0..n).map(|_| tn.sample(&mut r)).collect())
}

/// Law of the first covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum FirstCoordLaw {
    TruncatedNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

enum CoordSampler {
    Tn(TruncatedNormal),
    Uniform(f64, f64),
    Point(f64),
}

impl CoordSampler {
    fn draw(&self, r: &mut SimRng) -> f64 {
        match self {
            CoordSampler::Tn(t) => t.sample(r),
            CoordSampler::Uniform(lo, hi) => lo + (hi - lo) * r.random::<f64>(),
            CoordSampler::Point(v) => {
                // Keep the stream aligned with the other laws.
                let _: f64 = r.random();
                *v
            }
        }
    }
}

impl FirstCoordLaw {
    fn sampler(&self) -> Result<CoordSampler> {
        Ok(match *self {
            FirstCoordLaw::TruncatedNormal { mu, sigma, lo, hi } => {
                CoordSampler::Tn(TruncatedNormal::new(mu, sigma, lo, hi)?)
            }
            FirstCoordLaw::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Config(format!("uniform law needs lo < hi, got [{lo}, {hi}]")));
                }
                CoordSampler::Uniform(lo, hi)
            }
            FirstCoordLaw::PointMass { value } => CoordSampler::Point(value),
        })
    }

    fn within_unit_cube(&self) -> bool {
        let inside = |v: f64| (-1.0..=1.0).contains(&v);
        match *self {
            FirstCoordLaw::TruncatedNormal { lo, hi, .. } | FirstCoordLaw::Uniform { lo, hi } => inside(lo) && inside(hi),
            FirstCoordLaw::PointMass { value } => inside(value),
        }
    }

    /// `∫ f dLaw` to absolute accuracy about 1e−12, splitting at `breaks`.
    /// The truncated-normal density is normalised by quadrature as well,
    /// since closed-form normal CDFs lose about 1e−11 here.
    fn integrate<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> Result<f64> {
        let (lo, hi, weight): (f64, f64, Box<dyn Fn(f64) -> f64>) = match *self {
            FirstCoordLaw::PointMass { value } => return Ok(f(value)),
            FirstCoordLaw::Uniform { lo, hi } => (lo, hi, Box::new(|_| 1.0)),
            FirstCoordLaw::TruncatedNormal { mu, sigma, lo, hi } => {
                TruncatedNormal::new(mu, sigma, lo, hi)?;
                (lo, hi, Box::new(move |x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp()))
            }
        };
        let inner: Vec<f64> = breaks.iter().copied().filter(|&b| lo < b && b < hi).collect();
        let num = integrate_with_breaks(|x| f(x) * weight(x), lo, hi, &inner, 1e-14, 1e-14);
        let den = integrate_with_breaks(&weight, lo, hi, &inner, 1e-14, 1e-14);
        let err = num.error / den.value + num.value.abs() * den.error / (den.value * den.value);
        if !(err <= 1e-10) {
            return Err(Error::invalid(format!("quadrature error estimate {err} too large")));
        }
        Ok(num.value / den.value)
    }
}

/// Response `Y = r(X^{(1)}) + N(0, noise_sd²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Response {
    /// `|x|³`.
    AbsCubic,
    /// `Σ_p coeffs[p] x^p`.
    Polynomial { coeffs: Vec<f64> },
}

impl Response {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Response::AbsCubic => x.abs().powi(3),
            Response::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }
}

/// Covariate-shift setup: source and target differ only in the law of the
/// first covariate; the others are uniform on `[−1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", deny_unknown_fields)]
pub enum SetupSpec {
    #[serde(rename = "TN0.5-Cubic")]
    Tn05Cubic { d: usize },
    #[serde(rename = "TN0.5-Cubic-Reversed")]
    Tn05CubicReversed { d: usize },
    #[serde(rename = "custom")]
    Custom { d: usize, source: FirstCoordLaw, target: FirstCoordLaw, response: Response, noise_sd: f64 },
}

fn tn(mu: f64) -> FirstCoordLaw {
    FirstCoordLaw::TruncatedNormal { mu, sigma: 0.5, lo: -1.0, hi: 1.0 }
}

impl SetupSpec {
    pub fn by_name(name: &str, d: usize) -> Result<Self> {
        match name {
            "TN0.5-Cubic" => Ok(SetupSpec::Tn05Cubic { d }),
            "TN0.5-Cubic-Reversed" => Ok(SetupSpec::Tn05CubicReversed { d }),
            other => Err(Error::Config(format!("unknown setup '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SetupSpec::Tn05Cubic { .. } => "TN0.5-Cubic",
            SetupSpec::Tn05CubicReversed { .. } => "TN0.5-Cubic-Reversed",
            SetupSpec::Custom { .. } => "custom",
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            SetupSpec::Tn05Cubic { d } | SetupSpec::Tn05CubicReversed { d } | SetupSpec::Custom { d, .. } => d,
        }
    }

    pub fn with_dim(&self, d: usize) -> Self {
        let mut s = self.clone();
        match &mut s {
            SetupSpec::Tn05Cubic { d: x } | SetupSpec::Tn05CubicReversed { d: x } | SetupSpec::Custom { d: x, .. } => *x = d,
        }
        s
    }

    pub fn source_law(&self) -> FirstCoordLaw {
        match self {
            SetupSpec::Tn05Cubic { .. } => tn(-0.5),
            SetupSpec::Tn05CubicReversed { .. } => tn(0.5),
            SetupSpec::Custom { source, .. } => source.clone(),
        }
    }

    pub fn target_law(&self) -> FirstCoordLaw {
        match self {
            SetupSpec::Tn05Cubic { .. } => tn(0.5),
            SetupSpec::Tn05CubicReversed { .. } => tn(-0.5),
            SetupSpec::Custom { target, .. } => target.clone(),
        }
    }

    pub fn response(&self) -> Response {
        match self {
            SetupSpec::Custom { response, .. } => response.clone(),
            _ => Response::AbsCubic,
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            SetupSpec::Custom { noise_sd, .. } => *noise_sd,
            _ => NOISE_SD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::Config("setup dimension must be positive".into()));
        }
        if !(self.noise_sd() >= 0.0 && self.noise_sd().is_finite()) {
            return Err(Error::Config("noise_sd must be finite and non-negative".into()));
        }
        for law in [self.source_law(), self.target_law()] {
            law.sampler()?;
            if !law.within_unit_cube() {
                return Err(Error::Config("first-coordinate laws must live in [-1, 1]".into()));
            }
        }
        Ok(())
    }

    /// `g(x) = E[(x^{(1)} + Y)² | X = x] = (x^{(1)} + r(x^{(1)}))² + σ²`.
    pub fn g(&self, x1: f64) -> f64 {
        let s = x1 + self.response().eval(x1);
        s * s + self.noise_sd().powi(2)
    }
}

/// One draw of a covariate-shift setup.
#[derive(Clone, Debug)]
pub struct SetupDraw {
    pub source: LabeledSample,
    pub targets: PointSet,
    /// Target labels; only the oracle baseline may look at these.
    pub hidden_target_labels: Vec<f64>,
}

fn draw_points(law: &CoordSampler, resp: &Response, noise: f64, d: usize, n: usize, r: &mut SimRng) -> (PointSet, Vec<f64>) {
    let mut pts = PointSet::with_capacity(d, n);
    let mut labels = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        x[0] = law.draw(r);
        for v in x.iter_mut().skip(1) {
            *v = -1.0 + 2.0 * r.random::<f64>();
        }
        let eps: f64 = r.sample(StandardNormal);
        labels.push(resp.eval(x[0]) + noise * eps);
        pts.push(&x).expect("dimension fixed");
    }
    (pts, labels)
}

pub fn gen_setup(spec: &SetupSpec, n: usize, m: usize, seed: u64) -> Result<SetupDraw> {
    spec.validate()?;
    if n == 0 || m == 0 {
        return Err(Error::Empty("setup sample size"));
    }
    let (d, resp, noise) = (spec.dim(), spec.response(), spec.noise_sd());
    let mut rs = rng::stream(seed, &[label_hash("source")]);
    let (xs, ys) = draw_points(&spec.source_law().sampler()?, &resp, noise, d, n, &mut rs);
    let mut rt = rng::stream(seed, &[label_hash("target")]);
    let (xt, yt) = draw_points(&spec.target_law().sampler()?, &resp, noise, d, m, &mut rt);
    Ok(SetupDraw { source: LabeledSample::new(xs, ys)?, targets: xt, hidden_target_labels: yt })
}

/// True target `e(h) = ∫ g dQ` by quadrature over the first coordinate.
pub fn oracle_expectation(spec: &SetupSpec) -> Result<f64> {
    spec.validate()?;
    spec.target_law().integrate(|x| spec.g(x), &[0.0])
}

/// Monte Carlo counterpart of [`oracle_expectation`] using `h` on simulated
/// target pairs; used as an independent check.
pub fn oracle_expectation_mc(spec: &SetupSpec, n: usize, seed: u64) -> Result<Estimate> {
    spec.validate()?;
    let law = spec.target_law().sampler()?;
    let (resp, noise) = (spec.response(), spec.noise_sd());
    let mut r = rng::stream(seed, &[label_hash("oracle-mc")]);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x1 = law.draw(&mut r);
        let eps: f64 = r.sample(StandardNormal);
        let h = (x1 + resp.eval(x1) + noise * eps).powi(2);
        s += h;
        s2 += h * h;
    }
    Ok(Estimate::from_sums(s, s2, n))
}

/// `c + Σ_i Σ_p coeffs[i][p] x_i^{p+1}`: additive polynomial in the covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditivePoly {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub coeffs: Vec<Vec<f64>>,
}

impl AdditivePoly {
    pub fn constant(c: f64) -> Self {
        Self { intercept: c, coeffs: Vec::new() }
    }

    /// `c + Σ_p coeffs[p] x_1^{p+1}`.
    pub fn in_first(intercept: f64, coeffs: Vec<f64>) -> Self {
        Self { intercept, coeffs: vec![coeffs] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coeffs
                .iter()
                .zip(x)
                .map(|(cs, &v)| cs.iter().rev().fold(0.0, |acc, c| (acc + c) * v))
                .sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (i, cs) in self.coeffs.iter().enumerate().take(x.len()) {
            g[i] = cs.iter().enumerate().map(|(p, c)| c * (p as f64 + 1.0) * x[i].powi(p as i32)).sum();
        }
        g
    }

    /// Diagonal of the Hessian (the off-diagonal entries vanish).
    pub fn hessian_diag(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; x.len()];
        for (i, cs) in self.coeffs.iter().enumerate().take(x.len()) {
            h[i] = cs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(p, c)| c * (p as f64 + 1.0) * p as f64 * x[i].powi(p as i32 - 1))
                .sum();
        }
        h
    }

    /// Mean under the uniform law on `[lo, hi]^d`.
    pub fn uniform_mean(&self, lo: f64, hi: f64) -> f64 {
        let moment = |q: i32| (hi.powi(q + 1) - lo.powi(q + 1)) / ((q as f64 + 1.0) * (hi - lo));
        self.intercept
            + self
                .coeffs
                .iter()
                .flat_map(|cs| cs.iter().enumerate().map(|(p, c)| c * moment(p as i32 + 1)))
                .sum::<f64>()
    }

    fn sub(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|i| {
                let (a, b) = (self.coeffs.get(i), other.coeffs.get(i));
                let l = a.map_or(0, Vec::len).max(b.map_or(0, Vec::len));
                (0..l)
                    .map(|p| {
                        a.and_then(|v| v.get(p)).copied().unwrap_or(0.0) - b.and_then(|v| v.get(p)).copied().unwrap_or(0.0)
                    })
                    .collect()
            })
            .collect();
        Self { intercept: self.intercept - other.intercept, coeffs }
    }
}

/// Observational design with covariates uniform on `[lo, hi]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteDgpSpec {
    pub d: usize,
    #[serde(default = "zero")]
    pub lo: f64,
    #[serde(default = "one")]
    pub hi: f64,
    pub propensity: AdditivePoly,
    pub g0: AdditivePoly,
    pub g1: AdditivePoly,
    pub sigma0: f64,
    pub sigma1: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn zero() -> f64 {
    0.0
}
fn one() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    0.05
}

impl Default for AteDgpSpec {
    /// `X ~ U[0,1]`, `e(x) = 0.25 + 0.5x`, `g0 = x²`, `g1 = x² + x`, unit-half noise.
    fn default() -> Self {
        Self {
            d: 1,
            lo: 0.0,
            hi: 1.0,
            propensity: AdditivePoly::in_first(0.25, vec![0.5]),
            g0: AdditivePoly::in_first(0.0, vec![0.0, 1.0]),
            g1: AdditivePoly::in_first(0.0, vec![1.0, 1.0]),
            sigma0: 0.5,
            sigma1: 0.5,
            eta: default_eta(),
        }
    }
}

impl AteDgpSpec {
    /// `E[g1(X) − g0(X)]`.
    pub fn true_tau(&self) -> f64 {
        self.g1.sub(&self.g0).uniform_mean(self.lo, self.hi)
    }

    /// Checks the overlap margin on a grid (full tensor grid up to d = 3,
    /// pseudo-random points above).
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !(self.lo < self.hi) {
            return Err(Error::Config("ATE design needs d ≥ 1 and lo < hi".into()));
        }
        if !(self.sigma0 >= 0.0 && self.sigma1 >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::Config("overlap margin must lie in (0, 1/2)".into()));
        }
        for x in self.validation_points() {
            let e = self.propensity.eval(&x);
            if !(e > self.eta && e < 1.0 - self.eta) {
                return Err(Error::OverlapViolation { point: x, value: e, eta: self.eta });
            }
        }
        Ok(())
    }

    fn validation_points(&self) -> Vec<Vec<f64>> {
        let at = |t: f64| self.lo + (self.hi - self.lo) * t;
        if self.d <= 3 {
            let m = 21usize;
            (0..m.pow(self.d as u32))
                .map(|mut c| {
                    (0..self.d)
                        .map(|_| {
                            let t = (c % m) as f64 / (m - 1) as f64;
                            c /= m;
                            at(t)
                        })
                        .collect()
                })
                .collect()
        } else {
            let mut r = rng::stream(0, &[label_hash("overlap-grid")]);
            (0..10_000).map(|_| (0..self.d).map(|_| at(r.random::<f64>())).collect()).collect()
        }
    }
}

pub fn gen_ate_dgp(spec: &AteDgpSpec, n: usize, seed: u64) -> Result<(AteSample, f64)> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty("ATE sample size"));
    }
    let mut r = rng::stream(seed, &[label_hash("ate")]);
    let mut pts = PointSet::with_capacity(spec.d, n);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut x = vec![0.0; spec.d];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = spec.lo + (spec.hi - spec.lo) * r.random::<f64>();
        }
        let treated = r.random::<f64>() < spec.propensity.eval(&x);
        let eps: f64 = r.sample(StandardNormal);
        let out = if treated { spec.g1.eval(&x) + spec.sigma1 * eps } else { spec.g0.eval(&x) + spec.sigma0 * eps };
        pts.push(&x).expect("dimension fixed");
        y.push(out);
        w.push(treated);
    }
    Ok((AteSample::new(pts, y, w)?, spec.true_tau()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_pvalue, ks_statistic};
    use approx::assert_relative_eq;

    #[test]
    fn truncated_normal_mean_and_support() {
        let xs = sample_truncated_normal(0.5, 0.5, -1.0, 1.0, 100_000, 11).unwrap();
        assert!(xs.iter().all(|x| (-1.0..=1.0).contains(x)));
        let est = Estimate::from_samples(&xs);
        let tn = TruncatedNormal::new(0.5, 0.5, -1.0, 1.0).unwrap();
        assert!(est.z_score(tn.mean()).abs() < 3.0, "{est:?} vs {}", tn.mean());
    }

    #[test]
    fn truncated_normal_ks() {
        let tn = TruncatedNormal::new(0.5, 0.5, -1.0, 1.0).unwrap();
        let xs = sample_truncated_normal(0.5, 0.5, -1.0, 1.0, 100_000, 12).unwrap();
        let d = ks_statistic(&xs, |x| tn.cdf(x));
        assert!(ks_pvalue(d, xs.len()) > 0.01);
        // Far-tail interval goes through the reflected branch.
        let far = TruncatedNormal::new(0.0, 1.0, 6.0, 7.0).unwrap();
        let ys: Vec<f64> = (0..2000).map(|i| far.quantile((i as f64 + 0.5) / 2000.0)).collect();
        assert!(ys.iter().all(|y| (6.0..=7.0).contains(y)));
        assert!(ys.windows(2).all(|w| w[0] <= w[1]));
        assert_relative_eq!(far.cdf(far.quantile(0.3)), 0.3, epsilon = 1e-9);
    }

    #[test]
    fn truncated_normal_concentrates() {
        let xs = sample_truncated_normal(0.2, 1e-6, -1.0, 1.0, 1000, 1).unwrap();
        assert!(xs.iter().all(|x| (x - 0.2).abs() < 1e-5));
        assert!(TruncatedNormal::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TruncatedNormal::new(0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn truncated_mean_closed_form_matches_quadrature() {
        let law = tn(0.5);
        let q = law.integrate(|x| x, &[]).unwrap();
        let tn = TruncatedNormal::new(0.5, 0.5, -1.0, 1.0).unwrap();
        // Reference from 30-digit arithmetic.
        let exact = 0.358606944636422996;
        assert!((q - exact).abs() < 1e-10 && (tn.mean() - exact).abs() < 1e-10);
        assert_relative_eq!(law.integrate(|_| 1.0, &[]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn setup_laws() {
        let spec = SetupSpec::Tn05Cubic { d: 5 };
        let draw = gen_setup(&spec, 20_000, 20_000, 3).unwrap();
        assert!(draw.source.covariates.as_flat().iter().all(|v| (-1.0..=1.0).contains(v)));
        let mean = |p: &PointSet, c: usize| p.iter().map(|x| x[c]).sum::<f64>() / p.len() as f64;
        let m_src = TruncatedNormal::new(-0.5, 0.5, -1.0, 1.0).unwrap().mean();
        assert!((mean(&draw.source.covariates, 0) - m_src).abs() < 0.02);
        assert!((mean(&draw.targets, 0) + m_src).abs() < 0.02);
        for c in 1..5 {
            assert!(mean(&draw.source.covariates, c).abs() < 0.03);
            assert!(mean(&draw.targets, c).abs() < 0.03);
        }
        let rev = gen_setup(&SetupSpec::Tn05CubicReversed { d: 1 }, 20_000, 10, 3).unwrap();
        assert!((mean(&rev.source.covariates, 0) + m_src).abs() < 0.02);
    }

    #[test]
    fn setup_is_deterministic() {
        let spec = SetupSpec::Tn05Cubic { d: 2 };
        let a = gen_setup(&spec, 100, 50, 9).unwrap();
        let b = gen_setup(&spec, 100, 50, 9).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.hidden_target_labels, b.hidden_target_labels);
        assert!(SetupSpec::by_name("nope", 1).is_err());
    }

    fn point_mass(value: f64) -> SetupSpec {
        SetupSpec::Custom {
            d: 1,
            source: tn(-0.5),
            target: FirstCoordLaw::PointMass { value },
            response: Response::AbsCubic,
            noise_sd: 0.1,
        }
    }

    #[test]
    fn oracle_point_masses() {
        assert_relative_eq!(oracle_expectation(&point_mass(0.0)).unwrap(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(oracle_expectation(&point_mass(1.0)).unwrap(), 4.01, epsilon = 1e-15);
    }

    #[test]
    fn oracle_matches_monte_carlo() {
        let spec = SetupSpec::Tn05Cubic { d: 1 };
        let q = oracle_expectation(&spec).unwrap();
        // Reference value from an independent high-precision quadrature.
        assert!((q - 0.678937969592791801).abs() < 1e-10, "{q}");
        let mc = oracle_expectation_mc(&spec, 10_000_000, 5).unwrap();
        assert!(mc.z_score(q).abs() < 4.0, "{mc:?} vs {q}");
    }

    #[test]
    fn ate_default_design() {
        let spec = AteDgpSpec::default();
        assert_relative_eq!(spec.true_tau(), 0.5, epsilon = 1e-15);
        let (s, tau) = gen_ate_dgp(&spec, 20_000, 1).unwrap();
        assert_eq!(tau, 0.5);
        let frac = s.n_treated() as f64 / s.len() as f64;
        assert!((frac - 0.5).abs() < 0.02);
    }

    #[test]
    fn ate_constant_effect_and_overlap() {
        let spec = AteDgpSpec {
            propensity: AdditivePoly::constant(0.5),
            g1: AdditivePoly::in_first(2.0, vec![0.0, 1.0]),
            ..AteDgpSpec::default()
        };
        assert_relative_eq!(spec.true_tau(), 2.0, epsilon = 1e-15);
        let bad = AteDgpSpec { propensity: AdditivePoly::in_first(0.0, vec![1.0]), ..AteDgpSpec::default() };
        assert!(matches!(gen_ate_dgp(&bad, 10, 0), Err(Error::OverlapViolation { .. })));
    }

    #[test]
    fn additive_poly_derivatives() {
        let f = AdditivePoly { intercept: 1.0, coeffs: vec![vec![1.0, 2.0], vec![0.0, 0.0, 3.0]] };
        let x = [0.5, -2.0];
        assert_relative_eq!(f.eval(&x), 1.0 + 0.5 + 0.5 - 24.0);
        assert_eq!(f.gradient(&x), vec![1.0 + 2.0, 36.0]);
        assert_eq!(f.hessian_diag(&x), vec![4.0, -36.0]);
        assert_relative_eq!(f.uniform_mean(0.0, 1.0), 1.0 + 0.5 + 2.0 / 3.0 + 0.75);
    }

    #[test]
    fn specs_deserialize() {
        let s: SetupSpec = serde_json::from_str(r#"{"name":"TN0.5-Cubic","d":3}"#).unwrap();
        assert_eq!(s, SetupSpec::Tn05Cubic { d: 3 });
        let a: AteDgpSpec = serde_json::from_str(
            r#"{"d":1,"propensity":{"intercept":0.25,"coeffs":[[0.5]]},"g0":{"coeffs":[[0,1]]},"g1":{"coeffs":[[1,1]]},"sigma0":0.5,"sigma1":0.5}"#,
        )
        .unwrap();
        assert_eq!(a, AteDgpSpec::default());
        assert!(serde_json::from_str::<SetupSpec>(r#"{"name":"TN0.5-Cubic","d":3,"x":1}"#).is_err());
    }
}
