//! `rcmkit` command-line experiments.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical failure.

mod commands;
mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Core(rcmkit::Error),
}

impl From<rcmkit::Error> for CliError {
    fn from(e: rcmkit::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(s) => write!(f, "{s}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rcmkit",
    version,
    about = "Kinematics, calibration, OCT tool localization and design scoring for a 5-DOF RCM arm",
    long_about = "Kinematics, calibration, OCT tool localization and design scoring for a 5-DOF RCM arm.\n\n\
        All angles on the command line and in files are in degrees; lengths are in mm.\n\
        Exit codes: 0 success, 2 input/validation error, 3 numerical or ill-posed failure."
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config value.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print a JSON report instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tooltip pose from joint values: θ1 θ2 (deg) d3 (mm) [θ4 (deg) d5 (mm)].
    Fk(FkArgs),
    /// Joint values placing the tooltip at x y z (mm).
    Ik(IkArgs),
    /// Generate a synthetic dataset: measurement sets, point clouds and a ground-truth sidecar.
    Simulate,
    /// CT-only and CT+FK calibration from a measurement set.
    Calibrate(CalibrateArgs),
    /// Tool tip and axis from OCT point-cloud files.
    Localize(LocalizeArgs),
    /// Remote center of a set of tool lines.
    Rcm(RcmArgs),
    /// Score the spherical-mechanism design grid and report the best design.
    Workspace(WorkspaceArgs),
}

#[derive(Args, Debug)]
pub struct FkArgs {
    #[arg(num_args = 3..=5, allow_negative_numbers = true, required = true)]
    pub joints: Vec<f64>,
    /// Skip the joint-limit check.
    #[arg(long)]
    pub no_limits: bool,
}

#[derive(Args, Debug)]
pub struct IkArgs {
    #[arg(num_args = 3, allow_negative_numbers = true, required = true)]
    pub point: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Calibration measurement set (JSON).
    pub measurements: PathBuf,
    /// Validation measurement set (JSON).
    #[arg(long)]
    pub validation: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    /// Point-cloud files (text or JSON).
    pub clouds: Vec<PathBuf>,
    /// Ground-truth sidecar written by `simulate`; adds errors against truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RcmArgs {
    /// Measurement set or tool-line list (JSON).
    pub lines: PathBuf,
    /// Calibration report; adds the remote center predicted by its parameters.
    #[arg(long)]
    pub calibration_report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WorkspaceArgs {
    /// θ12 range (deg): "v" or "start:stop:step".
    #[arg(long)]
    pub theta12: Option<String>,
    /// θ13 range (deg).
    #[arg(long)]
    pub theta13: Option<String>,
    /// θ35 range (deg).
    #[arg(long)]
    pub theta35: Option<String>,
    /// Tilt of the target semi-sphere (deg).
    #[arg(long, allow_negative_numbers = true)]
    pub tilt: Option<f64>,
}

/// Resolved configuration shared by all commands.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub json: bool,
}

impl Context {
    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn out_dir(&self) -> Option<&std::path::Path> {
        self.cfg.output_dir.as_deref()
    }
}

fn build_context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(Context { cfg, json: cli.json })
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut ctx = build_context(&cli)?;
    match &cli.command {
        Command::Fk(a) => commands::fk(&ctx, a),
        Command::Ik(a) => commands::ik(&ctx, a),
        Command::Simulate => commands::simulate(&ctx),
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::Localize(a) => commands::localize(&ctx, a),
        Command::Rcm(a) => commands::rcm(&ctx, a),
        Command::Workspace(a) => commands::workspace(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
