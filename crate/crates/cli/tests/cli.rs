use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_knnshift"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap()
}

const SWEEP: &str = r#"{"sweep": {
    "setup": "TN0.5-Cubic", "dims": [1, 2], "n_grid": [100, 200, 400],
    "methods": ["1NN-W", "1NN-CSA", "NoCorrection", "OracleY"], "replications": 4, "seed": 3
}}"#;

#[test]
fn sweep_writes_csvs_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["sweep"], &cfg, &a).status.success());
    let o = bin().args(["sweep", "--threads", "1"]).arg("--config").arg(&cfg).arg("--out").arg(&b).output().unwrap();
    assert!(o.status.success());
    let rows = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(rows.lines().next().unwrap(), "method,d,n,k,L,replication,estimate,oracle,error");
    assert_eq!(rows.lines().count(), 1 + 4 * 2 * 3 * 4);
    assert_eq!(rows, std::fs::read_to_string(b.join("results.csv")).unwrap());
    let agg = std::fs::read_to_string(a.join("aggregates.csv")).unwrap();
    assert_eq!(agg.lines().next().unwrap(), "method,d,n,bias,variance,rmse,stderr");
    let verdicts = read_json(&a.join("verdicts.json"));
    assert_eq!(verdicts["rates"].as_array().unwrap().len(), 8);
}

#[test]
fn seed_and_reps_flags_apply() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bin().args(["sweep", "--seed", "11", "--reps", "2"]).arg("--config").arg(&cfg).arg("--out").arg(&a).status().unwrap().success());
    assert!(run(&["sweep"], &cfg, &b).status.success());
    let ra = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(ra.lines().count(), 1 + 4 * 2 * 3 * 2);
    assert_ne!(ra.lines().nth(1), std::fs::read_to_string(b.join("results.csv")).unwrap().lines().nth(1));
}

#[test]
fn estimate_prints_one_row_per_method() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"command": "estimate", "estimate": {"setup": "TN0.5-Cubic", "d": 1, "n": 500, "methods": ["1NN-W", {"method": "csa", "conditional_mean": true}]}}"#,
    );
    let o = run(&["estimate"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let est = v["estimates"].as_array().unwrap();
    assert_eq!(est.len(), 2);
    assert_eq!(est[1]["method"], "csa");
    assert!((est[0]["estimate"].as_f64().unwrap() - 0.679).abs() < 0.2);
}

#[test]
fn geometry_writes_verdicts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"geometry": {
            "domains": [{"name": "unit square", "domain": {"kind": "box", "lower": [0, 0], "upper": [1, 1]}}],
            "n_mc": 20000, "x2": {"n_centers": 4, "r_grid": [0.1, 0.5], "n_mc": 500}
        }}"#,
    );
    let o = run(&["geometry"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("verdicts.json"));
    let d = &v["domains"][0];
    assert_eq!(d["condition_a"], "bounded");
    assert!(d["x2_min_ratio"].as_f64().unwrap() > 0.1);
    assert!(dir.path().join("condition_a_unit_square.csv").exists());
    assert!(dir.path().join("tube_unit_square.csv").exists());
}

#[test]
fn verify_order_statistic_suite_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"verify": {"tau_laws": [{"x": 0.5, "n": 50, "k": 1, "reps": 1000}], "negative_correlation": {"trials": 20}}}"#,
    );
    let o = run(&["verify", "--suite", "lemmas"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v = read_json(&dir.path().join("verdicts.json"));
    assert_eq!(v["passed"], true);
    assert_eq!(v["reports"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("negative_correlation.csv").exists());
}

#[test]
fn failed_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"verify": {"catchment": {"n": 50, "k": 1, "t_grid": [1.0], "reps": 20, "c": 1000.0}}}"#);
    let o = run(&["verify", "--suite", "catchment"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_json(&dir.path().join("verdicts.json"))["passed"], false);
}

#[test]
fn ate_writes_replications() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"ate": {"n": 400, "reps": 3, "k": {"policy": "constant", "k": 2}}}"#);
    let o = run(&["ate"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["semiparametric_variance"].as_f64().unwrap() - (3f64.ln() + 1.0 / 12.0)).abs() < 1e-8);
}

#[test]
fn config_errors_exit_two_with_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"sweep": {"setup": "TN0.5-Cubic", "dimz": [1]}}"#);
    let o = run(&["sweep"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["code"], 2);
    assert!(e["message"].as_str().unwrap().contains("dimz"));

    let cfg = write_config(dir.path(), r#"{"command": "ate", "ate": {"n": 10}}"#);
    assert_eq!(run(&["sweep"], &cfg, dir.path()).status.code(), Some(2));
    let o = run(&["geometry"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["sweep"], &dir.path().join("missing.json"), dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"ate": {"n": 100, "dgp": {"d": 1, "propensity": {"intercept": 0.01}, "g0": {}, "g1": {}, "sigma0": 1, "sigma1": 1}}}"#);
    let o = run(&["ate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["code"], 3);
}

#[test]
fn help_lists_config_schema() {
    let o = bin().args(["sweep", "--help"]).output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("--config"));
    assert!(text.contains("m_rule"));
    assert!(text.contains("ring_union"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            knnshift::config::RunConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
}
