use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use knnshift::config::{AteEstimator, AteTarget, Command, RunConfig, X2Options};
use knnshift::datagen::gen_ate_dgp;
use knnshift::estimators::{estimate_ate, estimate_ate_local_poly, estimate_att, semiparametric_variance, LocalPolyOptions};
use knnshift::geometry::{check_condition_a, check_condition_x2, tube_mass_ratio, UniformOnDomain};
use knnshift::harness::{
    fit_rate, run_sweep, verify_ate_normality, verify_bias_expansion, verify_bias_rate, verify_catchment_tail,
    verify_negative_correlation, verify_tau_laws, SweepResult, VerifierReport,
};
use knnshift::rng::{self, derive_seed, label_hash};
use knnshift::{Error, Result};
use rand::Rng;
use serde_json::{json, Value};

use crate::Suite;

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: &'a Path,
}

pub enum Outcome {
    Passed,
    ChecksFailed,
}

impl Context<'_> {
    fn section<'b, T>(&self, value: &'b Option<T>, command: Command) -> Result<&'b T> {
        value.as_ref().ok_or_else(|| Error::Config(format!("config has no '{}' section", command.name())))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<()> {
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

fn write_sweep(ctx: &Context, result: &SweepResult) -> Result<()> {
    result.write_rows_csv(ctx.create("results.csv")?)?;
    result.write_aggregates_csv(ctx.create("aggregates.csv")?)
}

pub fn estimate(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.section(&ctx.config.estimate, Command::Estimate)?;
    let sweep = cfg.to_sweep(ctx.config.resolve_seed(ctx.seed, cfg.seed));
    let result = run_sweep(&sweep)?;
    write_sweep(ctx, &result)?;
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|r| json!({ "method": r.method, "k": r.k, "estimate": r.estimate, "oracle": r.oracle }))
        .collect();
    println!("{}", json!({ "estimates": rows, "failures": result.failures }));
    Ok(Outcome::Passed)
}

pub fn sweep(ctx: &Context) -> Result<Outcome> {
    let mut cfg = ctx.section(&ctx.config.sweep, Command::Sweep)?.clone();
    cfg.seed = ctx.config.resolve_seed(ctx.seed, cfg.seed);
    if let Some(r) = ctx.reps {
        cfg.replications = r;
    }
    let result = run_sweep(&cfg)?;
    write_sweep(ctx, &result)?;
    let mut rates = Vec::new();
    let mut labels: Vec<String> = result.aggregates.iter().map(|a| a.method.clone()).collect();
    labels.dedup();
    labels.sort();
    labels.dedup();
    for label in &labels {
        for &d in &cfg.dims {
            let (ns, rmse) = result.rmse_curve(label, d);
            if let Ok(fit) = fit_rate(&ns, &rmse) {
                rates.push(json!({ "method": label, "d": d, "slope": fit.slope, "stderr": fit.stderr }));
            }
        }
    }
    ctx.write_json("verdicts.json", &json!({ "rates": rates, "failures": result.failures }))?;
    Ok(Outcome::Passed)
}

fn default_radii(diam: f64) -> Vec<f64> {
    (0..10).map(|i| diam * 10f64.powf(-3.0 + i as f64 / 3.0)).collect()
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn geometry(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.section(&ctx.config.geometry, Command::Geometry)?;
    if cfg.domains.is_empty() {
        return Err(Error::Config("geometry needs at least one domain".into()));
    }
    let seed = ctx.config.resolve_seed(ctx.seed, cfg.seed);
    let x2 = cfg.x2.clone().unwrap_or_else(X2Options::default);
    let n_mc = ctx.reps.unwrap_or(cfg.n_mc);
    let mut verdicts = Vec::with_capacity(cfg.domains.len());
    let mut agree_all = true;
    for named in &cfg.domains {
        let domain = &named.domain;
        domain.validate()?;
        let q = UniformOnDomain::new(domain.clone())?;
        let base = derive_seed(seed, &[label_hash(&named.name)]);
        let a = check_condition_a(domain, &q, &cfg.l_grid, n_mc, derive_seed(base, &[1]))?;
        let tube = tube_mass_ratio(domain, &q, &cfg.eps_grid, n_mc, derive_seed(base, &[2]))?;
        let radii = x2.r_grid.clone().unwrap_or_else(|| default_radii(domain.diameter()));
        let x2r = check_condition_x2(domain, x2.n_centers, &radii, x2.n_mc, derive_seed(base, &[3]))?;
        let stem = file_stem(&named.name);
        a.write_csv(ctx.create(&format!("condition_a_{stem}.csv"))?)?;
        tube.write_csv(ctx.create(&format!("tube_{stem}.csv"))?)?;
        let agree = a.verdict == tube.verdict;
        agree_all &= agree;
        verdicts.push(json!({
            "name": named.name,
            "condition_a": a.verdict,
            "tube": tube.verdict,
            "verdicts_agree": agree,
            "x2_min_ratio": x2r.min_ratio,
            "x2_stderr": x2r.stderr,
            "x2_center": x2r.center,
            "x2_radius": x2r.radius,
        }));
    }
    ctx.write_json("verdicts.json", &json!({ "domains": verdicts, "verdicts_agree": agree_all }))?;
    Ok(Outcome::Passed)
}

fn suite_reports(ctx: &Context, suite: Suite) -> Result<Vec<VerifierReport>> {
    let mut cfg = ctx.config.verify.clone().unwrap_or_default();
    cfg.override_all(ctx.seed.or(ctx.config.seed), ctx.reps);
    let mut reports = Vec::new();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Lemmas) {
        for t in &cfg.tau_laws {
            for mut r in verify_tau_laws(t)? {
                r.name = format!("{}_x{}_n{}_k{}", r.name, t.x, t.n, t.k);
                reports.push(r);
            }
        }
        let nc = &cfg.negative_correlation;
        let mut rng = rng::stream(nc.seed, &[label_hash("negative_correlation")]);
        let mut checks = Vec::new();
        for _ in 0..nc.trials {
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let (pa, pb) = (u.min(v), (u - v).abs());
            let n = rng.random_range(1..=nc.max_n.max(1));
            checks.extend(verify_negative_correlation(pa, pb, n)?.checks);
        }
        reports.push(VerifierReport::new("negative_correlation", checks));
    }
    if wants(Suite::Catchment) {
        reports.push(verify_catchment_tail(&cfg.catchment)?);
    }
    if wants(Suite::Bias) {
        reports.push(verify_bias_expansion(&cfg.bias_expansion)?);
        for r in &cfg.bias_rates {
            reports.push(verify_bias_rate(r)?);
        }
    }
    if wants(Suite::Ate) {
        reports.push(verify_ate_normality(&cfg.ate)?);
    }
    Ok(reports)
}

pub fn verify(ctx: &Context, suite: Suite) -> Result<Outcome> {
    let reports = suite_reports(ctx, suite)?;
    for r in &reports {
        r.write_csv(ctx.create(&format!("{}.csv", file_stem(&r.name)))?)?;
    }
    let passed = reports.iter().all(|r| r.passed);
    let summaries: Vec<Value> = reports.iter().map(|r| r.summary()).collect();
    let summary = json!({ "passed": passed, "reports": summaries });
    ctx.write_json("verdicts.json", &summary)?;
    println!("{summary}");
    Ok(if passed { Outcome::Passed } else { Outcome::ChecksFailed })
}

pub fn ate(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.section(&ctx.config.ate, Command::Ate)?;
    let seed = ctx.config.resolve_seed(ctx.seed, cfg.seed);
    let reps = ctx.reps.unwrap_or(cfg.reps);
    if reps == 0 || cfg.n == 0 {
        return Err(Error::Config("ate needs n ≥ 1 and reps ≥ 1".into()));
    }
    if let (AteTarget::Att, AteEstimator::LocalPoly { .. }) = (cfg.target, cfg.estimator) {
        return Err(Error::Config("the local polynomial estimator targets the ATE only".into()));
    }
    let k = cfg.k.k(cfg.dgp.d, cfg.n);
    let mut w = ctx.create("ate.csv")?;
    writeln!(w, "replication,n,k,target,truth,estimate,weighting,imputation")?;
    let mut errors = Vec::with_capacity(reps);
    for rep in 0..reps {
        let (data, tau) = gen_ate_dgp(&cfg.dgp, cfg.n, derive_seed(seed, &[rep as u64]))?;
        let (truth, est, weighting, imputation) = match (cfg.target, cfg.estimator) {
            (AteTarget::Ate, AteEstimator::Matching) => {
                let e = estimate_ate(&data, k)?;
                (tau, e.value(), e.weighting, e.imputation)
            }
            (AteTarget::Ate, AteEstimator::LocalPoly { order }) => {
                let e = estimate_ate_local_poly(&data, k, LocalPolyOptions::new(order))?;
                (tau, e.value, f64::NAN, f64::NAN)
            }
            (AteTarget::Att, _) => {
                let e = estimate_att(&data, k)?;
                // Sample ATT: mean effect over the treated units.
                let (mut sum, mut count) = (0.0, 0usize);
                for i in 0..data.len() {
                    if data.treated[i] {
                        let x = data.covariates.row(i);
                        sum += cfg.dgp.g1.eval(x) - cfg.dgp.g0.eval(x);
                        count += 1;
                    }
                }
                (sum / count.max(1) as f64, e.value(), e.weighting, e.imputation)
            }
        };
        let target = match cfg.target {
            AteTarget::Ate => "ate",
            AteTarget::Att => "att",
        };
        writeln!(w, "{rep},{},{k},{target},{truth},{est},{weighting},{imputation}", cfg.n)?;
        errors.push(est - truth);
    }
    w.flush()?;
    let r = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / r;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / r).sqrt();
    let sigma2 = semiparametric_variance(&cfg.dgp, 1_000_000, derive_seed(seed, &[label_hash("variance")]))?;
    println!(
        "{}",
        json!({ "n": cfg.n, "k": k, "reps": reps, "bias": bias, "rmse": rmse, "semiparametric_variance": sigma2.value })
    );
    Ok(Outcome::Passed)
}
