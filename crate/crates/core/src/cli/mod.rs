//! Command-line front end.
//!
//! ```text
//! toa-sync simulate [--config PATH] [--seed U64] [--out PATH]
//! toa-sync track    [--config PATH] --in PATH [--out PATH]
//! toa-sync crlb     [--config PATH] [--seed U64] [--out PATH]
//! toa-sync mc       [--config PATH] [--seed U64] [--out PATH]
//! ```
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! for runtime or data errors.

pub mod config;
pub mod io;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::crlb::{crlb_trajectory, CrlbError};
use crate::model::{synthesize, MeasurementFrame, NoiseSpec, TargetPosition};
use crate::sim::{generate_trajectory, run_monte_carlo, track_frames, McReport, SimError, TrialOutcome};

pub use config::{parse_config, ConfigError, RunConfig};
pub use io::DataError;

#[derive(Debug, Parser)]
#[command(name = "toa-sync", version, about = "Joint TOA localization and clock-bias tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Configuration file; experiment defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output CSV; stdout when omitted (simulate requires it).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a measurement file and the matching truth file.
    Simulate(CommonArgs),
    /// Track a measurement file.
    Track {
        #[command(flatten)]
        common: CommonArgs,
        /// Measurement CSV with header k,z11,z12,z21,z22.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
    },
    /// Square-root CRLB along the configured trajectory.
    Crlb(CommonArgs),
    /// Monte-Carlo RMSE report next to the CRLB.
    Mc(CommonArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Data { path: String, source: DataError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn data_err(path: &str) -> impl FnOnce(DataError) -> CliError + '_ {
    move |source| CliError::Data { path: path.to_string(), source }
}

/// Loads the config file (or defaults) and applies `--seed`.
pub fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    Ok(cfg)
}

fn open_output(path: Option<&Path>) -> Result<(Box<dyn Write>, String), CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(io_err(p))?;
            Ok((Box::new(BufWriter::new(f)), p.display().to_string()))
        }
        None => Ok((Box::new(std::io::stdout().lock()), "<stdout>".to_string())),
    }
}

/// `meas.csv` becomes `meas.truth.csv`.
pub fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}.truth.{ext}"))
}

/// Frames and truth for the configured trajectory, using the noise stream
/// of Monte-Carlo trial 0.
pub fn simulate(cfg: &RunConfig) -> (Vec<MeasurementFrame>, Vec<TargetPosition>) {
    let truth = generate_trajectory(&cfg.trajectory);
    let noise = NoiseSpec { sigma: cfg.sigma(), seed: cfg.mc.trial_seed(0) };
    let frames =
        truth.iter().enumerate().map(|(i, &x)| synthesize(x, &cfg.anchors, cfg.bias(), noise, i + 1)).collect();
    (frames, truth)
}

pub fn command_simulate(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), CliError> {
    let out = cfg.output.clone().ok_or_else(|| CliError::Usage("simulate needs --out PATH".into()))?;
    let truth_out = truth_path(&out);
    let (frames, truth) = simulate(cfg);
    let (w, name) = open_output(Some(&out))?;
    io::write_measurements(w, &frames).map_err(data_err(&name))?;
    let (w, name) = open_output(Some(&truth_out))?;
    io::write_truth(w, &truth).map_err(data_err(&name))?;
    Ok((out, truth_out))
}

pub fn command_track(cfg: &RunConfig, input: &Path) -> Result<TrialOutcome, CliError> {
    let f = File::open(input).map_err(io_err(input))?;
    let name = input.display().to_string();
    let frames = io::read_measurements(BufReader::new(f)).map_err(data_err(&name))?;
    let outcome = track_frames(frames, &cfg.anchors, cfg.solver());
    let (w, name) = open_output(cfg.output.as_deref())?;
    io::write_track(w, &outcome.steps).map_err(data_err(&name))?;
    Ok(outcome)
}

pub fn command_crlb(cfg: &RunConfig) -> Result<(), CliError> {
    let truth = generate_trajectory(&cfg.trajectory);
    let values = crlb_trajectory(&truth, &cfg.anchors, cfg.sigma())?;
    let (w, name) = open_output(cfg.output.as_deref())?;
    io::write_crlb(w, &values).map_err(data_err(&name))
}

pub fn command_monte_carlo(cfg: &RunConfig) -> Result<McReport, CliError> {
    let report = run_monte_carlo(&cfg.trajectory, &cfg.anchors, &cfg.mc)?;
    let (w, name) = open_output(cfg.output.as_deref())?;
    io::write_mc_rows(w, &report.rows).map_err(data_err(&name))?;
    Ok(report)
}

/// Executes a parsed command line, reporting diagnostics on stderr.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load_config(&args)?;
            let (meas, truth) = command_simulate(&cfg)?;
            eprintln!("wrote {} and {}", meas.display(), truth.display());
        }
        Command::Track { common, input } => {
            let cfg = load_config(&common)?;
            let outcome = command_track(&cfg, &input)?;
            for (step, e) in &outcome.failures {
                eprintln!("step {step}: {e}");
            }
        }
        Command::Crlb(args) => {
            let cfg = load_config(&args)?;
            command_crlb(&cfg)?;
        }
        Command::Mc(args) => {
            let cfg = load_config(&args)?;
            let report = command_monte_carlo(&cfg)?;
            if report.failed_steps > 0 || report.unconverged_steps > 0 {
                eprintln!(
                    "{} failed and {} unconverged steps over {} trials",
                    report.failed_steps, report.unconverged_steps, report.mc.trials
                );
            }
        }
    }
    Ok(())
}
