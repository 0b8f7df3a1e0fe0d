//! Command-line front end: argument parsing, config overrides and dispatch.

mod config;
mod stages;

pub use config::{ConfigError, EvaluationSection, ExperimentSection, GridChoice, HsSection, LinkageSection, PathsConfig, RunConfig};
pub use stages::{
    all, assign_stage, classify, evaluate_stage, features, generate, ingest, labels, link, report, run_experiments, CliError, Layout,
    STAGES,
};

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dwellcast", version, about = "Container service and dwell-time forecasting pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact root (overrides paths.output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use the complete published hyperparameter grid.
    #[arg(long, global = true)]
    pub full_grid: bool,
    /// Overrides experiment.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides experiment.max_splits.
    #[arg(long, global = true)]
    pub max_splits: Option<usize>,
    /// Overrides experiment.train_stride_days.
    #[arg(long, global = true)]
    pub stride: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic world to raw/.
    Generate,
    /// Clean the source extracts into store/.
    Ingest,
    /// Resolve consignee names into linkage/.
    Link,
    /// Assign HS chapters into hsclass/.
    Classify,
    /// Feature matrices and leakage audit into features/.
    Features(PointArgs),
    /// Label tables into labels/.
    Labels(PointArgs),
    /// Train and validate every (task, split, grid point) into registry/.
    RunExperiment,
    /// Service ranking and dwell assignment into decisions/.
    Assign,
    /// Metrics, baselines and overlap analysis into evaluation/.
    Evaluate,
    /// Report bundle into report/.
    Report,
    /// Every stage in order.
    All,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Prediction dates (YYYY-MM-DD); defaults to each split's first validation day.
    #[arg(long = "as-of")]
    pub as_of: Vec<NaiveDate>,
}

/// Loads the config and applies command-line overrides.
pub fn effective_config(g: &GlobalArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &g.out {
        cfg.paths.output = o.clone();
    }
    if g.full_grid {
        cfg.experiment.grid = GridChoice::Full;
    }
    if let Some(s) = g.seed {
        cfg.experiment.seed = s;
    }
    if let Some(m) = g.max_splits {
        cfg.experiment.max_splits = Some(m);
    }
    if let Some(s) = g.stride {
        cfg.experiment.train_stride_days = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli.global)?;
    let out = Layout::new(cfg.paths.output.clone());
    match &cli.command {
        Command::Generate => generate(&cfg, &out),
        Command::Ingest => ingest(&cfg, &out),
        Command::Link => link(&cfg, &out),
        Command::Classify => classify(&cfg, &out),
        Command::Features(p) => features(&cfg, &out, &p.as_of),
        Command::Labels(p) => labels(&cfg, &out, &p.as_of),
        Command::RunExperiment => run_experiments(&cfg, &out),
        Command::Assign => assign_stage(&cfg, &out),
        Command::Evaluate => evaluate_stage(&cfg, &out),
        Command::Report => report(&cfg, &out),
        Command::All => all(&cfg, &out),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
