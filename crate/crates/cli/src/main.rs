//! `trackae`: train, calibrate and run the flight-track anomaly detector.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Ctx, TransferArgs};
use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn map_msg(self, f: impl FnOnce(String) -> String) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(f(m)),
            CliError::Data(m) => CliError::Data(f(m)),
            CliError::Numerical(m) => CliError::Numerical(f(m)),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<trackae::Error> for CliError {
    fn from(e: trackae::Error) -> Self {
        use trackae::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) | E::InvalidConfig(_) | E::InvalidState(_) => CliError::Usage(msg),
            E::Numerical(_) => CliError::Numerical(msg),
            E::Parse { .. } | E::Unresamplable { .. } | E::Checkpoint { .. } | E::Io(_) | E::Csv(_) => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "trackae", version, about = "Flight-track anomaly detection with a convolutional autoencoder")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clip, filter and resample track CSVs into the training feature file
    Ingest {
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        airport: Option<PathBuf>,
    },
    /// Train the autoencoder on the preliminary-normal features
    Train {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Set the alarm threshold from training reconstruction errors
    Calibrate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use this quantile of training errors instead of the configured method
        #[arg(long)]
        quantile: Option<f64>,
    },
    /// Score tracks and write anomaly reports
    Detect {
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        airport: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Assign anomaly categories to tracks, or to the anomalies of a report file
    Classify {
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        airport: Option<PathBuf>,
        #[arg(long)]
        reports: Option<PathBuf>,
    },
    /// Summarize anomaly reports
    Report {
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Also list tracks whose MAE lies within this distance of the threshold
        #[arg(long)]
        near_threshold: Option<f64>,
        /// Threshold for --near-threshold when no detect.json is present
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Fine-tune a trained model on another airport's tracks
    Transfer {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        airport: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also train from scratch and report epochs to --loss-target
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        loss_target: Option<f64>,
    },
    /// Generate synthetic arrivals with labeled injected anomalies
    Synth {
        /// TOML airport profile; the built-in profile when omitted
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        inject_per_type: usize,
    },
    /// Draw original and reconstructed series of one scored track as SVG
    Plot {
        #[arg(long)]
        flight_id: String,
        /// Directory holding detect output; defaults to --out
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Run gradient, convolution-oracle and adjoint self-checks
    Check {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Ingest { tracks, airport } => commands::cmd_ingest(&ctx, tracks, airport),
        Command::Train { features, checkpoint } => commands::cmd_train(&ctx, features, checkpoint),
        Command::Calibrate { features, checkpoint, quantile } => commands::cmd_calibrate(&ctx, features, checkpoint, quantile),
        Command::Detect { tracks, airport, checkpoint } => commands::cmd_detect(&ctx, tracks, airport, checkpoint),
        Command::Classify { tracks, airport, reports } => commands::cmd_classify(&ctx, tracks, airport, reports),
        Command::Report { reports, near_threshold, delta } => commands::cmd_report(&ctx, reports, near_threshold, delta),
        Command::Transfer { source, tracks, airport, epochs, compare, loss_target } => {
            commands::cmd_transfer(&ctx, TransferArgs { source, tracks, airport, epochs, compare, loss_target })
        }
        Command::Synth { profile, n, inject_per_type } => commands::cmd_synth(&ctx, profile, n, inject_per_type),
        Command::Plot { flight_id, report_dir } => commands::cmd_plot(&ctx, &flight_id, report_dir).map(|_| ()),
        Command::Check { inject_fault } => commands::cmd_check(&ctx, inject_fault),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
