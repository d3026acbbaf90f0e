//! Command-line front end for kinesim: sizing, deployment simulation, trace
//! replay, airtime, parameter sweeps and calibration.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "kinesim", version, about = "Motion-powered sensor node sizing and reliability simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file, or `preset:paper-bin`, `preset:paper-door`, `preset:paper-cabinet`
    pub config: String,

    /// Replace a config value, e.g. `--override wake_threshold=12`
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Root seed; falls back to the config, then KINESIM_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory for the JSON, CSV and table reports
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Include every event in the JSON report
    #[arg(long)]
    pub per_event: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size gear ratio, capacitance and wake threshold for the workload
    Size {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run a seeded deployment simulation
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of sampled actuations
        #[arg(long)]
        events: Option<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Segment an encoder trace and run its actuations
    Replay {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trace CSV: timestamp_ms,angle_deg,limit_switch
        trace: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// LoRa time on air and transmit energy
    Toa(commands::ToaArgs),
    /// Simulate across a range of one parameter
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Numeric override key to vary
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        /// Write the CSV here instead of stdout
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Charging checks on the nominal actuation, optionally fitting the
    /// partial-actuation share to a target success rate
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Target mean success rate in (0, 1)
        #[arg(long)]
        target_success: Option<f64>,
        #[arg(long, default_value_t = 32)]
        replicates: u64,
    },
}

pub fn command() -> clap::Command {
    Cli::command().after_long_help(config::override_help()).after_help(config::override_help())
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return 2;
        }
    };
    match commands::dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
