//! Finite-sample coverage of the normal-approximation interval for the ATE
//! matching estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Check, VerifierReport};
use super::sweep::KPolicy;
use crate::datagen::{gen_ate_dgp, AteDgpSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate_ate, semiparametric_variance};
use crate::rng;
use crate::stats::wilson_interval;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteNormalityConfig {
    #[serde(default)]
    pub dgp: AteDgpSpec,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_k_rule")]
    pub k_rule: KPolicy,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Accepted coverage band for the nominal 95% interval.
    #[serde(default = "default_band")]
    pub band: (f64, f64),
    /// Monte Carlo draws for the variance when `d ≥ 3`.
    #[serde(default = "default_variance_mc")]
    pub variance_mc: usize,
}

fn default_k_rule() -> KPolicy {
    KPolicy::Power { alpha: 0.3 }
}
fn default_band() -> (f64, f64) {
    (0.90, 0.98)
}
fn default_variance_mc() -> usize {
    1_000_000
}

impl AteNormalityConfig {
    pub fn new(dgp: AteDgpSpec, n_grid: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self { dgp, n_grid, k_rule: default_k_rule(), reps, seed, band: default_band(), variance_mc: default_variance_mc() }
    }
}

const Z95: f64 = 1.959963984540054;

/// Coverage of `μ̂ ± 1.96 σ / √N` at every `N`, with `σ²` the semiparametric
/// bound. Dimensions above 3 are skipped: the remaining bias is not
/// negligible there and the normal limit does not apply.
pub fn verify_ate_normality(cfg: &AteNormalityConfig) -> Result<VerifierReport> {
    if cfg.dgp.d > 3 {
        return Ok(VerifierReport::skipped(
            "ate_normality",
            format!("d = {}: the asymptotic normality result does not extend to this case", cfg.dgp.d),
        ));
    }
    if cfg.reps < 2 || cfg.n_grid.is_empty() {
        return Err(Error::Config("ATE coverage needs reps ≥ 2 and a non-empty N grid".into()));
    }
    cfg.dgp.validate()?;
    let sigma = semiparametric_variance(&cfg.dgp, cfg.variance_mc, rng::derive_seed(cfg.seed, &[rng::label_hash("variance")]))?
        .value
        .max(0.0)
        .sqrt();
    let mut checks = Vec::with_capacity(cfg.n_grid.len());
    let mut notes = Vec::new();
    for &n in &cfg.n_grid {
        let k = cfg.k_rule.k(cfg.dgp.d, n);
        let half = Z95 * sigma / (n as f64).sqrt();
        let covered: Vec<bool> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| -> Result<bool> {
                let (data, tau) = gen_ate_dgp(&cfg.dgp, n, rng::derive_seed(cfg.seed, &[n as u64, rep as u64]))?;
                let est = estimate_ate(&data, k)?.value();
                Ok((est - tau).abs() <= half + 1e-12)
            })
            .collect::<Result<_>>()?;
        let hits = covered.iter().filter(|&&c| c).count();
        let coverage = hits as f64 / cfg.reps as f64;
        let (lo, hi) = wilson_interval(hits, cfg.reps, Z95);
        notes.push(format!("N = {n}, k = {k}: coverage {coverage:.4}, 95% Wilson interval [{lo:.4}, {hi:.4}]"));
        let se = (coverage * (1.0 - coverage) / cfg.reps as f64).sqrt();
        let passed = (cfg.band.0..=cfg.band.1).contains(&coverage);
        checks.push(Check::new("coverage", n as f64, coverage, 0.95, se, passed));
    }
    let mut report = VerifierReport::new("ate_normality", checks).with_note(format!("sigma = {sigma:.6}"));
    for note in notes {
        report = report.with_note(note);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::AdditivePoly;

    #[test]
    fn default_design_small_run() {
        let r = verify_ate_normality(&AteNormalityConfig::new(AteDgpSpec::default(), vec![1000], 200, 1)).unwrap();
        let c = r.checks[0].observed;
        assert!((0.85..=1.0).contains(&c), "{r:#?}");
    }

    #[test]
    fn noiseless_constant_effect_always_covers() {
        let dgp = AteDgpSpec {
            g0: AdditivePoly::constant(1.0),
            g1: AdditivePoly::constant(3.0),
            sigma0: 0.0,
            sigma1: 0.0,
            ..AteDgpSpec::default()
        };
        let cfg = AteNormalityConfig { band: (1.0, 1.0), ..AteNormalityConfig::new(dgp, vec![300], 50, 2) };
        let r = verify_ate_normality(&cfg).unwrap();
        assert!(r.passed, "{r:#?}");
    }

    #[test]
    fn high_dimension_is_skipped() {
        let dgp = AteDgpSpec { d: 4, ..AteDgpSpec::default() };
        let cfg = AteNormalityConfig { k_rule: KPolicy::Constant { k: 1 }, ..AteNormalityConfig::new(dgp, vec![100], 10, 3) };
        let r = verify_ate_normality(&cfg).unwrap();
        assert!(r.skipped);
        assert!(r.checks.is_empty());
    }
}
