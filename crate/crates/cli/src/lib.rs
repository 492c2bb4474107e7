//! `tsslab` command-line driver: reads one TOML config, runs a simulator or
//! experiment, and writes CSV/JSON outputs plus `manifest.json`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod export;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use config::{
    parse_config, CheckParams, ConfigError, Experiment, Problem, RunConfig, DEFAULT_OUTPUT,
};

#[derive(Debug, Parser)]
#[command(
    name = "tsslab",
    version,
    about = "Trait substitution and individual-based population simulations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 means available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact individual-based run: events.csv, snapshots.csv.
    SimulateIbm(RunArgs),
    /// Trait substitution sequence path: tss_path.csv.
    SimulateTss(RunArgs),
    /// Two-type Lotka-Volterra integration: lv.csv.
    LvOde(RunArgs),
    /// Model validation and pairwise classification.
    CheckAssumptions(RunArgs),
    /// Equilibrium mass and stationarity of a monomorphic population.
    Equilibrium(RunArgs),
    /// Invasion frequency of a single mutant.
    Fixation(RunArgs),
    /// Individual-based runs against the substitution sequence.
    TssVsIbm(RunArgs),
    /// Branching-process oracles and couplings.
    BranchingOracle(RunArgs),
    /// Runs whatever `[experiment] name` names.
    Run(RunArgs),
}

impl Command {
    pub fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Self::SimulateIbm(a) => ("simulate-ibm", a),
            Self::SimulateTss(a) => ("simulate-tss", a),
            Self::LvOde(a) => ("lv-ode", a),
            Self::CheckAssumptions(a) => ("check-assumptions", a),
            Self::Equilibrium(a) => ("equilibrium", a),
            Self::Fixation(a) => ("fixation", a),
            Self::TssVsIbm(a) => ("tss-vs-ibm", a),
            Self::BranchingOracle(a) => ("branching-oracle", a),
            Self::Run(a) => ("run", a),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{message}")]
    Precondition {
        message: String,
        report: Option<Value>,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(e) => e.kind(),
            Self::Precondition { .. } => "precondition",
            Self::Io(_) | Self::Csv(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Precondition { .. } => 3,
            Self::Io(_) | Self::Csv(_) => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let problems: Vec<Problem> = match self {
            Self::Config(e) => e.problems(),
            _ => vec![],
        };
        let report = match self {
            Self::Precondition { report, .. } => report.clone(),
            _ => None,
        };
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "problems": problems,
                "report": report,
            },
            "exit_code": self.exit_code(),
        })
    }
}

fn semantic(message: String) -> CliError {
    CliError::Config(ConfigError::Semantic(vec![Problem {
        line: None,
        column: None,
        message,
    }]))
}

/// The experiment a subcommand runs under a given config.
pub fn select_experiment(command: &str, cfg: &RunConfig) -> Result<Experiment, CliError> {
    match (&cfg.experiment, command) {
        (Some(e), "run") => Ok(e.clone()),
        (Some(e), c) if e.name() == c => Ok(e.clone()),
        (_, "check-assumptions") => Ok(Experiment::CheckAssumptions(CheckParams::default())),
        (Some(e), c) => Err(semantic(format!(
            "config describes experiment `{}` but `{c}` was requested",
            e.name()
        ))),
        (None, "run") => Err(semantic("`run` needs an [experiment] section".into())),
        (None, c) => Experiment::defaults(c).ok_or_else(|| {
            semantic(format!(
                "`{c}` needs an [experiment] section with its required parameters"
            ))
        }),
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub experiment: Option<String>,
    pub config: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub replicates: Option<u64>,
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
    pub status: &'static str,
    pub error_kind: Option<&'static str>,
}

fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

/// Runs one subcommand and returns the process exit code. The manifest is
/// written even when the run fails.
pub fn run(cli: &Cli) -> i32 {
    let (command, args) = cli.command.parts();
    let mut manifest = Manifest {
        tool: "tsslab",
        version: env!("CARGO_PKG_VERSION"),
        core_version: tsslab::VERSION,
        command: command.to_string(),
        experiment: None,
        config: args.config.display().to_string(),
        config_sha256: std::fs::read(&args.config)
            .ok()
            .map(|b| config::sha256_hex(&b)),
        seed: args.seed,
        replicates: None,
        threads: None,
        outputs: vec![],
        status: "ok",
        error_kind: None,
    };
    let mut out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));

    let result = parse_config(&args.config)
        .map_err(CliError::from)
        .and_then(|mut cfg| {
            match args.seed {
                Some(0) => return Err(semantic("--seed must be positive".into())),
                Some(seed) => cfg.seed = seed,
                None => {}
            }
            if let Some(t) = args.threads {
                cfg.threads = (t > 0).then_some(t);
            }
            if args.out.is_none() {
                out_dir = cfg.output.clone();
            }
            manifest.seed = Some(cfg.seed);
            manifest.replicates = Some(cfg.replicates);
            manifest.threads = Some(match cfg.threads {
                Some(t) => t,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            });
            let exp = select_experiment(command, &cfg)?;
            manifest.experiment = Some(exp.name().to_string());
            std::fs::create_dir_all(&out_dir)?;
            commands::execute(&exp, &cfg, &out_dir)
        });

    let code = match result {
        Ok(outputs) => {
            manifest.outputs = outputs;
            0
        }
        Err(e) => {
            let body = e.to_json();
            eprintln!("{body}");
            manifest.status = "error";
            manifest.error_kind = Some(e.kind());
            if std::fs::create_dir_all(&out_dir).is_ok()
                && write_text(&out_dir.join("error.json"), &pretty(&body)).is_ok()
            {
                manifest.outputs.push("error.json".into());
            }
            e.exit_code()
        }
    };
    manifest.outputs.push("manifest.json".into());
    if let Err(e) = std::fs::create_dir_all(&out_dir)
        .and_then(|_| write_text(&out_dir.join("manifest.json"), &pretty(&manifest)))
    {
        eprintln!(
            "{}",
            json!({"error": {"kind": "io", "message": format!("cannot write manifest: {e}")}})
        );
        return if code == 0 { 1 } else { code };
    }
    code
}
