mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use knnshift::config::{Command, RunConfig, SCHEMA_HELP};
use serde_json::json;

#[derive(Parser)]
#[command(name = "knnshift", version, about = "Nearest-neighbour matching estimators and their Monte Carlo checks")]
#[command(after_long_help = SCHEMA_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One estimate per method on a single draw; writes results.csv.
    #[command(after_long_help = SCHEMA_HELP)]
    Estimate(Common),
    /// Rate sweep over (method, d, n); writes results.csv, aggregates.csv, verdicts.json.
    #[command(after_long_help = SCHEMA_HELP)]
    Sweep(Common),
    /// Boundary-condition checks per domain; writes verdicts.json and curve CSVs.
    #[command(after_long_help = SCHEMA_HELP)]
    Geometry(Common),
    /// Verifier suites; writes one CSV per report and verdicts.json.
    #[command(after_long_help = SCHEMA_HELP)]
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Repeated ATE/ATT estimation; writes ate.csv.
    #[command(after_long_help = SCHEMA_HELP)]
    Ate(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replication count override.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Lemmas,
    Catchment,
    Bias,
    Ate,
    All,
}

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const RUNTIME: u8 = 3;
}

fn fail(code: u8, message: impl std::fmt::Display, context: &str) -> ExitCode {
    eprintln!("{}", json!({ "code": code, "message": message.to_string(), "context": context }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, suite) = match &cli.command {
        Cmd::Estimate(c) => (Command::Estimate, c, None),
        Cmd::Sweep(c) => (Command::Sweep, c, None),
        Cmd::Geometry(c) => (Command::Geometry, c, None),
        Cmd::Verify { common, suite } => (Command::Verify, common, Some(*suite)),
        Cmd::Ate(c) => (Command::Ate, c, None),
    };
    let context = command.name();
    if let Some(t) = common.threads {
        if t == 0 {
            return fail(exit::CONFIG, "--threads must be positive", context);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(exit::RUNTIME, e, context);
        }
    }
    let config = match RunConfig::from_path(&common.config).and_then(|c| c.check_command(command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => return fail(exit::CONFIG, e, &common.config.display().to_string()),
    };
    let out = common.out.clone().or_else(|| config.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        return fail(exit::RUNTIME, format!("cannot create {}: {e}", out.display()), context);
    }
    let ctx = run::Context { config: &config, seed: common.seed, reps: common.reps, out: &out };
    let result = match command {
        Command::Estimate => run::estimate(&ctx),
        Command::Sweep => run::sweep(&ctx),
        Command::Geometry => run::geometry(&ctx),
        Command::Verify => run::verify(&ctx, suite.unwrap_or(Suite::All)),
        Command::Ate => run::ate(&ctx),
    };
    match result {
        Ok(run::Outcome::Passed) => ExitCode::from(exit::OK),
        Ok(run::Outcome::ChecksFailed) => ExitCode::from(exit::CHECK_FAILED),
        Err(e) if e.is_config() => fail(exit::CONFIG, e, context),
        Err(e) => fail(exit::RUNTIME, e, context),
    }
}
