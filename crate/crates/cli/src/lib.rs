//! The `phirat` command line: simulate, features, cluster, evaluate, report, sweep.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{RawConfig, RunConfig};
use error::CliError;
use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "phirat", version, about = "Hierarchical categorical risk-factor reduction")]
pub struct Cli {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// kmedoids, spectral, hca or kmeans.
    #[arg(long, global = true)]
    pub algorithm: Option<String>,
    /// ch, db, dunn or silhouette.
    #[arg(long, global = true)]
    pub index: Option<String>,
    /// full_angular or risk_euclidean.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Minimum training salary mass per grouped category.
    #[arg(long, global = true)]
    pub min_mass: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Write a synthetic hierarchy, portfolio, pseudo-encoder embeddings and ground truth.
    Simulate,
    /// Fit the level-1 mixed models and write effects and feature matrices.
    Features,
    /// Run the hierarchical clustering and write the grouping.
    Cluster,
    /// Score a grouping by Gini index and loss ratio.
    Evaluate,
    /// Write sunburst and scatter tables from earlier outputs.
    Report,
    /// Compare every algorithm and index against the benchmark.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Features => "features",
            Command::Cluster => "cluster",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
            Command::Sweep => "sweep",
        }
    }
}

/// Merges defaults, the config file and flags into a resolved configuration.
pub fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut raw = RawConfig::defaults();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        raw.apply_text(&text)?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{o}` is not KEY=VALUE")))?;
        raw.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        raw.set("seed", &s.to_string())?;
    }
    if let Some(a) = &cli.algorithm {
        raw.set("algorithm", a)?;
    }
    if let Some(i) = &cli.index {
        raw.set("index", i)?;
    }
    if let Some(v) = &cli.variant {
        raw.set("variant", v)?;
    }
    if let Some(m) = cli.min_mass {
        raw.set("min_mass", &m.to_string())?;
    }
    if let Some(o) = &cli.out {
        raw.set("out", &o.to_string_lossy())?;
    }
    RunConfig::resolve(raw)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    let mut m = Manifest::default();
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut m)?,
        Command::Features => commands::features(&cfg, &mut m)?,
        Command::Cluster => commands::cluster(&cfg, &mut m)?,
        Command::Evaluate => commands::evaluate_cmd(&cfg, &mut m)?,
        Command::Report => commands::report(&cfg, &mut m)?,
        Command::Sweep => commands::sweep(&cfg, &mut m)?,
    }
    let name = cli.command.name();
    let text = m.render(name, cfg.phirat.seed, &cfg.raw.canonical());
    let path = commands::manifest_path(&cfg, name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
/// Failures print one `Class: message` line to stderr.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            let err = CliError::Config(first.to_string());
            eprintln!("{}", err.one_line());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.one_line());
            e.exit_code()
        }
    }
}
