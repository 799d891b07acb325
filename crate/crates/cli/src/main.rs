mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(zeff_core::Error),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Compliance(String),
}

impl From<zeff_core::Error> for CliError {
    fn from(e: zeff_core::Error) -> Self {
        match e {
            zeff_core::Error::Domain { what, reason } => {
                CliError::Validation(format!("{what}: {reason}"))
            }
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Compliance(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zeff",
    version,
    about = "Effective Thevenin impedance of grid-forming inverters"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Also write the time-domain window of every scan point.
    #[arg(long, global = true)]
    pub keep_raw: bool,
    /// RMS error threshold for compliance; overrides the config.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Leave timestamps out of run metadata so reruns are byte-identical.
    #[arg(long, global = true)]
    pub stable_output: bool,
    /// Worker threads (1 runs serially).
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Number of scan frequencies; overrides the config.
    #[arg(long, global = true)]
    pub points: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Admittance scan of the configured device.
    Scan,
    /// Fit an equivalent, check compliance and write the overlay.
    Fit(FitArgs),
    /// Fit and compliance check only.
    Comply(FitArgs),
    /// Voltage-step comparison of the device and its equivalent.
    Step(EquivArgs),
    /// P–V trace of the device.
    Pv(PvArgs),
    /// Ideal-source versus GFM case study.
    Case,
    /// Closed-form transient power of an ideal source after a grid step.
    Analytic,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Spectrum file (CSV or JSON); scans the configured device if absent.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EquivArgs {
    /// Existing fit.json; scans and fits the device if absent.
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PvArgs {
    #[command(flatten)]
    pub equiv: EquivArgs,
    /// Also trace the fitted equivalent.
    #[arg(long)]
    pub compare: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.parallel {
        if n == 0 {
            return Err(CliError::Validation("--parallel: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--parallel: {e}")))?;
    }
    let ctx = commands::Context::new(&cli.global)?;
    match cli.cmd {
        Command::Scan => commands::scan(&ctx),
        Command::Fit(a) => commands::fit(&ctx, &a, true),
        Command::Comply(a) => commands::fit(&ctx, &a, false),
        Command::Step(a) => commands::step(&ctx, &a),
        Command::Pv(a) => commands::pv(&ctx, &a),
        Command::Case => commands::case(&ctx),
        Command::Analytic => commands::analytic(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
