use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_setup, oracle_expectation, SetupSpec};
use crate::error::{Error, Result};
use crate::estimators::{anchored_mean, CsaMode, DegeneratePolicy, HFunction, LocalPolyOptions, Matcher};
use crate::rng::{derive_seed, label_hash};

/// How the neighbour count depends on the dimension and sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum KPolicy {
    Constant { k: usize },
    /// `k = d + 5`.
    DPlus5,
    /// `k = 2d² + 3d + 3`, the linear-fit preset of the experiments.
    PolyLowerBound,
    /// `k = ⌈n^alpha⌉`.
    Power { alpha: f64 },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Constant { k: 1 }
    }
}

impl KPolicy {
    pub fn k(&self, d: usize, n: usize) -> usize {
        match *self {
            KPolicy::Constant { k } => k,
            KPolicy::DPlus5 => d + 5,
            KPolicy::PolyLowerBound => 2 * d * d + 3 * d + 3,
            KPolicy::Power { alpha } => (n as f64).powf(alpha).ceil() as usize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Csa,
    Weight,
    Poly,
    NoCorrection,
    OracleY,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: MethodKind,
    #[serde(default)]
    pub k: KPolicy,
    #[serde(default)]
    pub order: u32,
    #[serde(default)]
    pub label: Option<String>,
    /// Use the k-NN label average instead of a random neighbour label.
    #[serde(default)]
    pub conditional_mean: bool,
    #[serde(default)]
    pub permissive: bool,
    #[serde(default)]
    pub degenerate: DegeneratePolicy,
}

impl MethodSpec {
    fn plain(method: MethodKind, k: KPolicy) -> Self {
        Self {
            method,
            k,
            order: 0,
            label: None,
            conditional_mean: false,
            permissive: false,
            degenerate: DegeneratePolicy::Abort,
        }
    }

    /// The named roster of the experiments.
    pub fn preset(name: &str) -> Result<Self> {
        let one = KPolicy::Constant { k: 1 };
        let spec = match name {
            "1NN-CSA" => Self::plain(MethodKind::Csa, one),
            "1NN-W" => Self::plain(MethodKind::Weight, one),
            "kNN-Poly-LB" => Self { order: 1, ..Self::plain(MethodKind::Poly, KPolicy::PolyLowerBound) },
            "kNN-Poly-d+5" => Self { order: 1, permissive: true, ..Self::plain(MethodKind::Poly, KPolicy::DPlus5) },
            "NoCorrection" => Self::plain(MethodKind::NoCorrection, one),
            "OracleY" => Self::plain(MethodKind::OracleY, one),
            other => return Err(Error::Config(format!("unknown method '{other}'"))),
        };
        Ok(Self { label: Some(name.to_string()), ..spec })
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let base = match self.method {
                MethodKind::Csa => "csa",
                MethodKind::Weight => "weight",
                MethodKind::Poly => "poly",
                MethodKind::NoCorrection => "no_correction",
                MethodKind::OracleY => "oracle_y",
            };
            match self.method {
                MethodKind::Poly => format!("{base}-L{}", self.order),
                MethodKind::NoCorrection | MethodKind::OracleY => base.to_string(),
                _ => base.to_string(),
            }
        })
    }

    fn uses_k(&self) -> bool {
        matches!(self.method, MethodKind::Csa | MethodKind::Weight | MethodKind::Poly)
    }
}

/// A method given by preset name or by full specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodEntry {
    Preset(String),
    Spec(MethodSpec),
}

impl MethodEntry {
    pub fn resolve(&self) -> Result<MethodSpec> {
        match self {
            MethodEntry::Preset(name) => MethodSpec::preset(name),
            MethodEntry::Spec(spec) => Ok(spec.clone()),
        }
    }
}

/// Setup given by name or by full specification; the dimension is set by
/// the sweep's `dims`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetupRef {
    Name(String),
    Spec(SetupSpec),
}

impl SetupRef {
    pub fn resolve(&self, d: usize) -> Result<SetupSpec> {
        match self {
            SetupRef::Name(name) => SetupSpec::by_name(name, d),
            SetupRef::Spec(spec) => Ok(spec.with_dim(d)),
        }
    }
}

/// Target sample size as a function of the source size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum MRule {
    #[default]
    SameAsN,
    Fixed { m: usize },
    Ratio { ratio: f64 },
}

impl MRule {
    pub fn m(&self, n: usize) -> usize {
        match *self {
            MRule::SameAsN => n,
            MRule::Fixed { m } => m,
            MRule::Ratio { ratio } => ((n as f64) * ratio).round().max(1.0) as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub setup: SetupRef,
    pub dims: Vec<usize>,
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub m_rule: MRule,
    pub methods: Vec<MethodEntry>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<Vec<MethodSpec>> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Config("dims must be non-empty and positive".into()));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be positive and strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        for &d in &self.dims {
            self.setup.resolve(d)?.validate()?;
        }
        let methods = self.methods.iter().map(MethodEntry::resolve).collect::<Result<Vec<_>>>()?;
        let mut labels: Vec<String> = methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("method labels must be unique".into()));
        }
        Ok(methods)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    #[serde(rename = "L")]
    pub order: u32,
    pub replication: usize,
    pub estimate: f64,
    pub oracle: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub d: usize,
    pub n: usize,
    pub bias: f64,
    /// Population variance of the errors, so `rmse² = bias² + variance`.
    pub variance: f64,
    pub rmse: f64,
    /// Standard error of `rmse` (delta method).
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub d: usize,
    pub n: usize,
    pub replication: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<CellFailure>,
}

impl SweepResult {
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["method", "d", "n", "k", "L", "replication", "estimate", "oracle", "error"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for a in &self.aggregates {
            w.serialize(a)?;
        }
        if self.aggregates.is_empty() {
            w.write_record(["method", "d", "n", "bias", "variance", "rmse", "stderr"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn aggregate(&self, method: &str, d: usize, n: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.d == d && a.n == n)
    }

    /// `(n, rmse)` pairs for one method and dimension, in grid order.
    pub fn rmse_curve(&self, method: &str, d: usize) -> (Vec<f64>, Vec<f64>) {
        self.aggregates.iter().filter(|a| a.method == method && a.d == d).map(|a| (a.n as f64, a.rmse)).unzip()
    }
}

fn run_method(
    spec: &MethodSpec,
    matcher: &Matcher,
    targets: &crate::PointSet,
    hidden: &[f64],
    k: usize,
    seed: u64,
) -> Result<f64> {
    let h = HFunction::FirstPlusLabelSquared;
    match spec.method {
        MethodKind::Weight => matcher.weight(targets, &h, k),
        MethodKind::Csa => {
            let mode = if spec.conditional_mean { CsaMode::ConditionalMean } else { CsaMode::Sampled { seed } };
            matcher.csa(targets, &h, k, mode)
        }
        MethodKind::Poly => {
            let opts = LocalPolyOptions { order: spec.order, policy: spec.degenerate, permissive: spec.permissive };
            Ok(matcher.local_poly(targets, &h, k, opts)?.value)
        }
        MethodKind::NoCorrection => {
            let s = matcher.source();
            let v: Vec<f64> = (0..s.len()).map(|i| h.eval(s.covariates.row(i), s.labels[i])).collect();
            Ok(anchored_mean(v.iter().copied(), v[0], v.len()))
        }
        MethodKind::OracleY => {
            let v: Vec<f64> = hidden.iter().enumerate().map(|(j, &y)| h.eval(targets.row(j), y)).collect();
            Ok(anchored_mean(v.iter().copied(), v[0], v.len()))
        }
    }
}

/// Runs every method on the same draws for each `(d, n, replication)`.
///
/// Data for a cell depend only on `(seed, d, n, replication)`, and each
/// method's internal randomness on its label as well, so estimates do not
/// change with method order or thread count. A method failing its
/// preconditions in a cell yields a NaN row and a [`CellFailure`].
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    let methods = config.validate()?;
    let oracles: Vec<f64> =
        config.dims.iter().map(|&d| oracle_expectation(&config.setup.resolve(d)?)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..config.dims.len())
        .flat_map(|di| config.n_grid.iter().flat_map(move |&n| (0..config.replications).map(move |r| (di, n, r))))
        .collect();
    let per_cell: Vec<Result<Vec<(ResultRow, Option<CellFailure>)>>> = cells
        .par_iter()
        .map(|&(di, n, rep)| {
            let d = config.dims[di];
            let spec = config.setup.resolve(d)?;
            let data_seed = derive_seed(config.seed, &[d as u64, n as u64, rep as u64]);
            let draw = gen_setup(&spec, n, config.m_rule.m(n), data_seed)?;
            let matcher = Matcher::new(&draw.source)?;
            Ok(methods
                .iter()
                .map(|m| {
                    let label = m.label();
                    let k = if m.uses_k() { m.k.k(d, n) } else { 0 };
                    let seed = derive_seed(data_seed, &[label_hash(&label)]);
                    let out = run_method(m, &matcher, &draw.targets, &draw.hidden_target_labels, k, seed);
                    let order = if m.method == MethodKind::Poly { m.order } else { 0 };
                    let (estimate, failure) = match out {
                        Ok(v) => (v, None),
                        Err(e) => (
                            f64::NAN,
                            Some(CellFailure { method: label.clone(), d, n, replication: rep, message: e.to_string() }),
                        ),
                    };
                    let oracle = oracles[di];
                    let row = ResultRow { method: label, d, n, k, order, replication: rep, estimate, oracle, error: estimate - oracle };
                    (row, failure)
                })
                .collect())
        })
        .collect();
    let mut result = SweepResult::default();
    for cell in per_cell {
        for (row, failure) in cell? {
            result.rows.push(row);
            result.failures.extend(failure);
        }
    }
    for &d in &config.dims {
        for &n in &config.n_grid {
            for m in &methods {
                let label = m.label();
                let errors: Vec<f64> = result
                    .rows
                    .iter()
                    .filter(|r| r.d == d && r.n == n && r.method == label && r.error.is_finite())
                    .map(|r| r.error)
                    .collect();
                result.aggregates.push(aggregate(label, d, n, &errors));
            }
        }
    }
    Ok(result)
}

fn aggregate(method: String, d: usize, n: usize, errors: &[f64]) -> Aggregate {
    let r = errors.len() as f64;
    if errors.is_empty() {
        let nan = f64::NAN;
        return Aggregate { method, d, n, bias: nan, variance: nan, rmse: nan, stderr: nan };
    }
    let bias = errors.iter().sum::<f64>() / r;
    let variance = errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / r;
    let mse = bias * bias + variance;
    let rmse = mse.sqrt();
    let sq_mean = errors.iter().map(|e| e * e).sum::<f64>() / r;
    let sq_var = errors.iter().map(|e| (e * e - sq_mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
    let stderr = if rmse > 0.0 { (sq_var / r).sqrt() / (2.0 * rmse) } else { 0.0 };
    Aggregate { method, d, n, bias, variance, rmse, stderr }
}

/// Least-squares fit of `log(error) = a + slope · log(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

pub fn fit_rate(n_values: &[f64], errors: &[f64]) -> Result<RateFit> {
    if n_values.len() != errors.len() || n_values.len() < 3 {
        return Err(Error::invalid("rate fit needs at least three (n, error) pairs"));
    }
    if errors.iter().chain(n_values).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("rate fit needs positive n and errors"));
    }
    let xs: Vec<f64> = n_values.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit { slope, stderr: (ssr / (k - 2.0) / sxx).sqrt(), intercept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_laws() {
        let ns = [500.0, 1000.0, 2000.0, 4000.0];
        let e: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
        let f = fit_rate(&ns, &e).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        let e: Vec<f64> = ns.iter().map(|n: &f64| 0.7 * n.powf(-0.4)).collect();
        assert_relative_eq!(fit_rate(&ns, &e).unwrap().slope, -0.4, epsilon = 1e-12);
        assert!(fit_rate(&ns[..2], &e[..2]).is_err());
        assert!(fit_rate(&ns, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn k_policies() {
        assert_eq!(KPolicy::PolyLowerBound.k(2, 100), 17);
        assert_eq!(KPolicy::DPlus5.k(5, 100), 10);
        assert_eq!(KPolicy::Power { alpha: 0.3 }.k(1, 5000), 13);
    }

    fn small_config(methods: &[&str]) -> SweepConfig {
        SweepConfig {
            setup: SetupRef::Name("TN0.5-Cubic".into()),
            dims: vec![1, 2],
            n_grid: vec![100, 200],
            m_rule: MRule::SameAsN,
            methods: methods.iter().map(|m| MethodEntry::Preset(m.to_string())).collect(),
            replications: 3,
            seed: 42,
        }
    }

    #[test]
    fn sweep_shape_and_identities() {
        let roster = ["1NN-CSA", "1NN-W", "kNN-Poly-LB", "NoCorrection", "OracleY"];
        let res = run_sweep(&small_config(&roster)).unwrap();
        assert_eq!(res.rows.len(), 5 * 2 * 2 * 3);
        assert_eq!(res.aggregates.len(), 5 * 2 * 2);
        for a in &res.aggregates {
            assert!((a.rmse * a.rmse - a.bias * a.bias - a.variance).abs() <= 1e-12 * a.rmse * a.rmse);
        }
        assert!(res.failures.is_empty(), "{:?}", res.failures);
    }

    #[test]
    fn method_order_does_not_matter() {
        let a = run_sweep(&small_config(&["1NN-CSA", "1NN-W", "OracleY"])).unwrap();
        let b = run_sweep(&small_config(&["OracleY", "1NN-W", "1NN-CSA"])).unwrap();
        for r in &a.rows {
            let twin = b
                .rows
                .iter()
                .find(|s| s.method == r.method && s.d == r.d && s.n == r.n && s.replication == r.replication)
                .unwrap();
            assert_eq!(r.estimate.to_bits(), twin.estimate.to_bits());
        }
    }

    #[test]
    fn invalid_cells_are_recorded() {
        let mut cfg = small_config(&["1NN-W"]);
        cfg.methods.push(MethodEntry::Spec(MethodSpec {
            label: Some("too-few".into()),
            order: 1,
            ..MethodSpec::plain(MethodKind::Poly, KPolicy::Constant { k: 2 })
        }));
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.failures.len(), 2 * 2 * 3);
        assert!(res.aggregate("too-few", 1, 100).unwrap().rmse.is_nan());
        assert!(res.aggregate("1NN-W", 1, 100).unwrap().rmse.is_finite());
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(&["1NN-W"]);
        cfg.replications = 0;
        assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
        let cfg = small_config(&["nope"]);
        assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
        let mut cfg = small_config(&["1NN-W"]);
        cfg.n_grid = vec![200, 100];
        assert!(run_sweep(&cfg).is_err());
        let json = r#"{"setup":"TN0.5-Cubic","dims":[1],"n_grid":[10,20],"replications":2,
            "methods":["1NN-W",{"method":"poly","k":{"policy":"poly_lower_bound"},"order":1}]}"#;
        let cfg: SweepConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.validate().unwrap()[1].label(), "poly-L1");
    }
}
