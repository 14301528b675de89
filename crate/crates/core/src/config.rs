//! JSON run configuration shared by the command-line front end. One file
//! may carry a section per command; unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::AteDgpSpec;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::harness::{
    AteNormalityConfig, BiasExpansionConfig, BiasRateConfig, CatchmentTailConfig, KPolicy, MRule, MethodEntry,
    RateRegime, SetupRef, SweepConfig, TauLawConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Sweep,
    Geometry,
    Verify,
    Ate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Sweep => "sweep",
            Command::Geometry => "geometry",
            Command::Verify => "verify",
            Command::Ate => "ate",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must agree with the command being run.
    #[serde(default)]
    pub command: Option<Command>,
    /// Overrides every section's seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory.
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub estimate: Option<EstimateConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub ate: Option<AteRunConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn check_command(&self, command: Command) -> Result<()> {
        match self.command {
            Some(c) if c != command => Err(Error::Config(format!(
                "config is for '{}' but '{}' was requested",
                c.name(),
                command.name()
            ))),
            _ => Ok(()),
        }
    }

    /// The seed to use for a section: command line, then top level, then section.
    pub fn resolve_seed(&self, cli: Option<u64>, section: u64) -> u64 {
        cli.or(self.seed).unwrap_or(section)
    }
}

/// A single estimate per method on one draw of a setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub setup: SetupRef,
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub m: Option<usize>,
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub seed: u64,
}

impl EstimateConfig {
    pub fn to_sweep(&self, seed: u64) -> SweepConfig {
        SweepConfig {
            setup: self.setup.clone(),
            dims: vec![self.d],
            n_grid: vec![self.n],
            m_rule: self.m.map_or(MRule::SameAsN, |m| MRule::Fixed { m }),
            methods: self.methods.clone(),
            replications: 1,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedDomain {
    pub name: String,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct X2Options {
    #[serde(default = "default_centers")]
    pub n_centers: usize,
    /// Radii; defaults to a geometric grid from `1e-3 · diam` up to `diam`.
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default = "default_x2_mc")]
    pub n_mc: usize,
}

impl Default for X2Options {
    fn default() -> Self {
        Self { n_centers: default_centers(), r_grid: None, n_mc: default_x2_mc() }
    }
}

fn default_centers() -> usize {
    32
}
fn default_x2_mc() -> usize {
    4000
}

/// Condition checks for a list of domains with `Q` uniform on each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub domains: Vec<NamedDomain>,
    #[serde(default = "default_l_grid")]
    pub l_grid: Vec<f64>,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_geometry_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub x2: Option<X2Options>,
    #[serde(default)]
    pub seed: u64,
}

pub fn default_l_grid() -> Vec<f64> {
    vec![1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8]
}
pub fn default_eps_grid() -> Vec<f64> {
    vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
}
fn default_geometry_mc() -> usize {
    2_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeCorrelationConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_n")]
    pub max_n: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NegativeCorrelationConfig {
    fn default() -> Self {
        Self { trials: default_trials(), max_n: default_max_n(), seed: 0 }
    }
}

fn default_trials() -> usize {
    100
}
fn default_max_n() -> u64 {
    6
}

/// Verifier suites. Every section has a full default, so `{}` is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_tau_laws")]
    pub tau_laws: Vec<TauLawConfig>,
    #[serde(default)]
    pub negative_correlation: NegativeCorrelationConfig,
    #[serde(default = "default_catchment")]
    pub catchment: CatchmentTailConfig,
    #[serde(default = "default_expansion")]
    pub bias_expansion: BiasExpansionConfig,
    #[serde(default = "default_rates")]
    pub bias_rates: Vec<BiasRateConfig>,
    #[serde(default = "default_normality")]
    pub ate: AteNormalityConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tau_laws: default_tau_laws(),
            negative_correlation: NegativeCorrelationConfig::default(),
            catchment: default_catchment(),
            bias_expansion: default_expansion(),
            bias_rates: default_rates(),
            ate: default_normality(),
        }
    }
}

fn default_tau_laws() -> Vec<TauLawConfig> {
    vec![
        TauLawConfig::new(0.5, 50, 1, 5000, 0),
        TauLawConfig::new(0.5, 50, 5, 5000, 0),
        TauLawConfig::new(0.5, 500, 10, 5000, 0),
        TauLawConfig::new(0.5, 500, 1, 5000, 0),
    ]
}
fn default_catchment() -> CatchmentTailConfig {
    CatchmentTailConfig { n: 2000, k: 1, t_grid: vec![2.0, 4.0, 8.0, 16.0], reps: 2000, seed: 0, c: 1.0 / std::f64::consts::TAU, n_inner: 20_000 }
}
fn default_expansion() -> BiasExpansionConfig {
    BiasExpansionConfig::new(1, vec![2000, 8000], 20_000, 0)
}
fn default_rates() -> Vec<BiasRateConfig> {
    vec![
        BiasRateConfig::new(RateRegime::Lipschitz, vec![1000, 4000, 16_000], 2000, 0),
        BiasRateConfig::new(RateRegime::Smooth, vec![1000, 4000, 16_000], 50, 0),
    ]
}
fn default_normality() -> AteNormalityConfig {
    AteNormalityConfig::new(AteDgpSpec::default(), vec![5000], 500, 0)
}

impl VerifyConfig {
    /// Applies a common seed and, when given, a common replication count.
    pub fn override_all(&mut self, seed: Option<u64>, reps: Option<usize>) {
        if let Some(s) = seed {
            self.tau_laws.iter_mut().for_each(|c| c.seed = s);
            self.negative_correlation.seed = s;
            self.catchment.seed = s;
            self.bias_expansion.seed = s;
            self.bias_rates.iter_mut().for_each(|c| c.seed = s);
            self.ate.seed = s;
        }
        if let Some(r) = reps {
            self.tau_laws.iter_mut().for_each(|c| c.reps = r);
            self.negative_correlation.trials = r;
            self.catchment.reps = r;
            self.bias_expansion.reps = r;
            self.bias_rates.iter_mut().for_each(|c| c.reps = r);
            self.ate.reps = r;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AteTarget {
    #[default]
    Ate,
    Att,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AteEstimator {
    #[default]
    Matching,
    LocalPoly {
        order: u32,
    },
}

/// Repeated ATE/ATT estimation on draws from a treatment design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteRunConfig {
    #[serde(default)]
    pub dgp: AteDgpSpec,
    pub n: usize,
    #[serde(default = "default_ate_k")]
    pub k: KPolicy,
    #[serde(default)]
    pub target: AteTarget,
    #[serde(default)]
    pub estimator: AteEstimator,
    #[serde(default = "one_rep")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_ate_k() -> KPolicy {
    KPolicy::Power { alpha: 0.3 }
}
fn one_rep() -> usize {
    1
}

/// Short description of every config section, for `--help`.
pub const SCHEMA_HELP: &str = r#"Config file (JSON). Top level:
  command   optional, one of estimate|sweep|geometry|verify|ate
  seed      optional u64, overrides section seeds (--seed overrides both)
  out       optional output directory (--out overrides)
  estimate  {setup, d, n, m?, methods, seed?}
  sweep     {setup, dims, n_grid, m_rule?, methods, replications, seed?}
  geometry  {domains: [{name, domain}], l_grid?, eps_grid?, n_mc?,
             x2?: {n_centers?, r_grid?, n_mc?}, seed?}
  verify    {tau_laws?, negative_correlation?, catchment?, bias_expansion?,
             bias_rates?, ate?}   every key has a default
  ate       {dgp?, n, k?, target?: ate|att,
             estimator?: {kind: matching} | {kind: local_poly, order}, reps?, seed?}

setup:   "TN0.5-Cubic" | "TN0.5-Cubic-Reversed" | {name: "custom", ...}
methods: preset names "1NN-CSA", "1NN-W", "kNN-Poly-LB", "kNN-Poly-d+5",
         "NoCorrection", "OracleY", or {method: csa|weight|poly|no_correction|oracle_y,
         k?: {policy: constant, k} | {policy: d_plus5} | {policy: poly_lower_bound}
             | {policy: power, alpha}, order?, label?, conditional_mean?,
         permissive?, degenerate?: abort|fallback_constant}
m_rule:  {rule: same_as_n} | {rule: fixed, m} | {rule: ratio, ratio}
domain:  {kind: box, lower, upper} | {kind: ball, center, radius}
         | {kind: polytope, normals, offsets, lower, upper}
         | {kind: parabola_subgraph} | {kind: ring_union, k_max, delta}
         | {kind: union, parts}"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_verify_section_gets_defaults() {
        let c = RunConfig::from_json(r#"{"verify": {}}"#).unwrap();
        assert_eq!(c.verify.unwrap(), VerifyConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"verfy": {}}"#).unwrap_err().is_config());
        assert!(RunConfig::from_json(r#"{"ate": {"n": 10, "reps": 2, "extra": 1}}"#).is_err());
    }

    #[test]
    fn command_mismatch() {
        let c = RunConfig::from_json(r#"{"command": "sweep"}"#).unwrap();
        assert!(c.check_command(Command::Sweep).is_ok());
        assert!(c.check_command(Command::Ate).is_err());
    }

    #[test]
    fn seed_precedence() {
        let c = RunConfig::from_json(r#"{"seed": 5}"#).unwrap();
        assert_eq!(c.resolve_seed(Some(9), 1), 9);
        assert_eq!(c.resolve_seed(None, 1), 5);
        assert_eq!(RunConfig::default().resolve_seed(None, 1), 1);
    }

    #[test]
    fn full_example_parses() {
        let text = r#"{
            "command": "geometry",
            "geometry": {
                "domains": [
                    {"name": "square", "domain": {"kind": "box", "lower": [0, 0], "upper": [1, 1]}},
                    {"name": "rings", "domain": {"kind": "ring_union", "k_max": 50, "delta": 0.01}}
                ],
                "x2": {"n_centers": 8}
            }
        }"#;
        let g = RunConfig::from_json(text).unwrap().geometry.unwrap();
        assert_eq!(g.domains.len(), 2);
        assert_eq!(g.l_grid, default_l_grid());
        assert_eq!(g.x2.unwrap().n_mc, default_x2_mc());
    }
}
