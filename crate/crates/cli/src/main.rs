//! `fes`: generate synthetic flame emission data, calibrate the POD/kriging
//! surrogate, train denoisers, predict and evaluate.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 numerical
//! failure.

mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fes_core::eval::Scheme;

use crate::commands::{PredictArgs, Sweep};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fes", version, about = "Denoising and calibration of short-exposure flame emission spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration document (TOML); defaults to the dataset's stored config, then desk scale
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the root seed of the configuration
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Raw,
    Plain,
    Du,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Raw => Scheme::Raw,
            SchemeArg::Plain => Scheme::Plain,
            SchemeArg::Du => Scheme::Du,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Rf,
    Exposure,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset
    Gen {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the POD basis and kriging surrogate on long-exposure calibration spectra
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Model directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train denoisers (both plain and du unless --scheme is given)
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory holding the calibration archives
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Output directory; defaults to --models
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate and print the network and training setup, then stop
        #[arg(long)]
        dry_run: bool,
    },
    /// Predict pressure and equivalence ratio for spectra in a table (one spectrum per line)
    Predict {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "du")]
        scheme: SchemeArg,
        /// Treat inputs as raw counts: subtract this mean dark spectrum and OH* normalize
        #[arg(long, value_name = "DARK")]
        preprocess: Option<PathBuf>,
        /// Add kriging variance columns
        #[arg(long)]
        variance: bool,
        /// Output table; defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare raw, plain and du schemes, or run a sweep
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_enum)]
        sweep: Option<SweepArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the evaluation tables in a directory
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Architecture calculators
    #[command(subcommand)]
    Calc(Calc),
}

#[derive(Subcommand)]
enum Calc {
    /// Receptive field N_d (N_l (N_k - 1) + 1)
    Rf {
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        kernel: usize,
        #[arg(long, default_value_t = 1)]
        downsample: usize,
    },
    /// Convolution weight and bias count
    Params {
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        channels: usize,
        #[arg(long)]
        kernel: usize,
        #[arg(long, default_value_t = 1)]
        downsample: usize,
        /// Also print the batch-norm parameter count
        #[arg(long)]
        bn: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { common, out } => {
            let cfg = files::resolve_config(common.config.as_deref(), None, common.seed)?;
            commands::gen(&cfg, &out)
        }
        Command::Calibrate { common, data, out } => {
            let cfg = files::resolve_config(common.config.as_deref(), Some(&data), common.seed)?;
            commands::calibrate(&cfg, &data, &out)
        }
        Command::Train { common, data, models, scheme, out, dry_run } => {
            let cfg = files::resolve_config(common.config.as_deref(), Some(&data), common.seed)?;
            let schemes = match scheme {
                Some(s) => vec![s.into()],
                None => vec![Scheme::Plain, Scheme::Du],
            };
            let out = out.unwrap_or_else(|| models.clone());
            commands::train(&cfg, &data, &models, &schemes, &out, dry_run)
        }
        Command::Predict { models, input, scheme, preprocess, variance, out } => commands::predict(&PredictArgs {
            models: &models,
            input: &input,
            scheme: scheme.into(),
            dark: preprocess.as_deref(),
            variance,
            out: out.as_deref(),
        }),
        Command::Eval { common, data, models, sweep, out } => {
            let cfg = files::resolve_config(common.config.as_deref(), Some(&data), common.seed)?;
            let sweep = sweep.map(|s| match s {
                SweepArg::Rf => Sweep::Rf,
                SweepArg::Exposure => Sweep::Exposure,
            });
            commands::eval(&cfg, &data, &models, sweep, &out)
        }
        Command::Report { out } => commands::report(&out),
        Command::Calc(Calc::Rf { layers, kernel, downsample }) => commands::calc_rf(layers, kernel, downsample),
        Command::Calc(Calc::Params { layers, channels, kernel, downsample, bn }) => {
            commands::calc_params(layers, channels, kernel, downsample, bn)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
