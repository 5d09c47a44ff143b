//! `eigenpath` command-line driver.

mod config;
mod output;
mod plot;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use eigenpath::timedist::DistSpec;
use serde_json::json;

use config::{Experiment, ExperimentConfig, Mode, PlanConfig, ValidationError, SCHEMA_VERSION};

const DEFAULT_OUT_DIR: &str = "eigenpath-out";

#[derive(Parser)]
#[command(name = "eigenpath", version, about = "Eigenstate preparation along discretized eigenpaths with randomized evolution times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "EIGENPATH_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Characteristic function, cost and cost bounds of a time distribution.
    DistInfo {
        /// Config of kind `dist_info`; alternative to `--dist`.
        #[arg(long, conflicts_with = "dist")]
        config: Option<PathBuf>,
        /// Distribution as JSON, e.g. '{"kind":"sinc4","params":{"lambda":1}}'.
        #[arg(long)]
        dist: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        omega_min: f64,
        #[arg(long, default_value_t = 4.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, env = "EIGENPATH_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("invalid configuration: {0}")]
    Config(ValidationError),
    #[error(transparent)]
    Library(#[from] eigenpath::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Library(e) if e.is_plan_rejection() => 3,
            CliError::Library(e) if e.is_numerical() => 4,
            CliError::Library(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            3 => "plan_rejected",
            4 => "numerical",
            _ => "io",
        }
    }

    fn record(&self) -> serde_json::Value {
        let field = match self {
            CliError::Config(v) => Some(v.field.clone()),
            _ => None,
        };
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "field": field }, "exit_code": self.exit_code() })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(CliError::Config)
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn execute(mut cfg: ExperimentConfig, out: Option<PathBuf>, plots: bool) -> Result<(), CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let dir = out_dir(out, &cfg);
    let started = Instant::now();
    let art = run::run(&cfg, plots)?;
    let elapsed = started.elapsed().as_secs_f64();
    // Output location is not part of the experiment identity.
    cfg.output_dir = None;
    let report = output::write_all(&dir, &cfg, &art, elapsed)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, out, mode, no_plots } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.plan.mode = m;
            }
            execute(cfg, out, !no_plots)
        }
        Command::DistInfo { config, dist, omega_min, omega_max, points, delta, out, no_plots } => {
            let cfg = match (config, dist) {
                (Some(path), None) => {
                    let cfg = load(&path)?;
                    if !matches!(cfg.experiment, Experiment::DistInfo { .. }) {
                        return Err(CliError::Config(ValidationError { field: "experiment.kind".into(), message: "dist-info needs a dist_info config".into() }));
                    }
                    cfg
                }
                (None, Some(text)) => {
                    let dist: DistSpec = serde_json::from_str(&text).map_err(|e| CliError::Config(ValidationError { field: "--dist".into(), message: e.to_string() }))?;
                    ExperimentConfig {
                        schema_version: SCHEMA_VERSION,
                        experiment: Experiment::DistInfo { dist, omega_min, omega_max, points, delta },
                        plan: PlanConfig::default(),
                        seed: 0,
                        output_dir: None,
                    }
                }
                _ => return Err(CliError::Config(ValidationError { field: "--dist".into(), message: "give --dist or --config".into() })),
            };
            execute(cfg, out, !no_plots)
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}", json!({ "valid": true, "experiment": cfg.kind(), "config_sha256": output::sha256_hex(cfg.canonical_json().as_bytes()) }));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}
