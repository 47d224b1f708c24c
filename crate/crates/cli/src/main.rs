//! `qicorr` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "qicorr", version, about = "Photon-pair ranging simulator and coincidence analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an acquisition and write a timestamp file.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Output timestamp file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate channel 0 (signal) against channel 1 (reference) of a timestamp file.
    G2 {
        /// Timestamp file.
        file: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Acquisition time. Defaults to the last timestamp plus one tick.
        #[arg(long)]
        duration_s: Option<f64>,
        /// Write per-bin CSV: lag_ticks, lag_ns, counts, g2.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a noise or QWP sweep and write CSV.
    ///
    /// CSV columns: x, counts, g2, snr, sigma. Noise sweeps add accidentals
    /// (peak-bin counts with the signal arm blocked), signal_rate (observed
    /// signal clicks per second) and correction (1/(1 - signal_rate*dead_time)).
    /// x is the noise rate in photons per second, or the QWP angle in radians.
    /// counts and accidentals are read at the coincidence bin, sigma = sqrt(counts),
    /// snr = g2 - 1.
    Sweep {
        kind: SweepArg,
        #[command(flatten)]
        run: RunArgs,
        /// Noise rates per second, or QWP angles in degrees, comma separated.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Output CSV. Printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a sweep CSV.
    Fit {
        model: FitArg,
        /// Sweep CSV written by `qicorr sweep`.
        csv: PathBuf,
        /// Config providing the signal detector dead time (visibility fits).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Signal detector dead time when no config is given.
        #[arg(long, default_value_t = 18.0)]
        dead_time_ns: f64,
        /// Fit visibility with d = 1 instead of the dead-time correction.
        #[arg(long)]
        no_correction: bool,
    },
    /// Observed rate and correction factor of a detector on Poisson input.
    Saturation {
        /// Config providing the signal detector model. Defaults are used otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Incident rates per second, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV: incident_rate, observed_rate, expected_rate, correction.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the detection arrangement.
    #[arg(long, value_enum)]
    arrangement: Option<ArrangementArg>,
    /// Override the acquisition time.
    #[arg(long)]
    duration_s: Option<f64>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Bin width in ticks.
    #[arg(long)]
    bins: Option<u64>,
    /// Lag range in ticks as MIN:MAX, e.g. --lag-range=-151:249.
    #[arg(long, allow_hyphen_values = true)]
    lag_range: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ArrangementArg {
    Tc,
    Tpc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    Noise,
    Qwp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitArg {
    Sinusoid,
    Visibility,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { run, out } => commands::simulate(&run, &out),
        Command::G2 { file, grid, duration_s, out } => commands::g2(&file, &grid, duration_s, out.as_deref()),
        Command::Sweep { kind, run, values, grid, out } => {
            commands::sweep(kind, &run, &values, &grid, out.as_deref())
        }
        Command::Fit { model, csv, config, dead_time_ns, no_correction } => {
            commands::fit(model, &csv, config.as_deref(), dead_time_ns, no_correction)
        }
        Command::Saturation { config, rates, duration_s, seed, out } => {
            commands::saturation(config.as_deref(), &rates, duration_s, seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
