//! Command-line wiring for the forecasting pipeline: synthetic data
//! generation, per-lead training, scoring, sweeps, and report comparison.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
//! divergence.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ghicast::Error;

#[derive(Parser)]
#[command(
    name = "ghicast",
    version,
    about = "Hourly solar irradiance forecasting over location grids",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic advected-cloud irradiance grid as CSV
    Synth(SynthArgs),
    /// Train one model for one lead time and save it
    Train(TrainArgs),
    /// Score a saved model on held-out data
    Eval(EvalArgs),
    /// Train and score one model across many lead times
    Sweep(SweepArgs),
    /// Compare single- vs multi-location sweep reports
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Config file with `key = value` lines (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid size as RxC [default: 5x5]
    #[arg(long)]
    grid: Option<String>,
    /// Hours to generate per location [default: 8760]
    #[arg(long)]
    hours: Option<usize>,
    /// Generator seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Cloud-field advection speed, grid cells per hour [default: 1]
    #[arg(long)]
    cloud_speed: Option<f64>,
    /// Cloud cover in [0, 1]; 0 yields the pure clear-sky curve [default: 1]
    #[arg(long)]
    cloud_cover: Option<f64>,
    /// Calendar year of the first record [default: 2000]
    #[arg(long)]
    start_year: Option<i32>,
    /// Output CSV path [default: synthetic.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelOpts {
    /// Model kind: ffnn, rnn, gru, lstm, bilstm, or gbrt [default: lstm]
    #[arg(long)]
    model: Option<String>,
    /// Feature mode: single or multi [default: single]
    #[arg(long)]
    mode: Option<String>,
    /// Target location id [default: the grid-center location]
    #[arg(long)]
    target: Option<u32>,
    /// Target GHI lag window p, hours [default: 120 single / 72 multi]
    #[arg(long)]
    p: Option<usize>,
    /// Neighbor GHI lag window p', hours (multi mode) [default: 2]
    #[arg(long)]
    p_prime: Option<usize>,
    /// Neighbor count N (multi mode) [default: 16]
    #[arg(long)]
    neighbors: Option<usize>,
    /// Seed for weight init and shuffling [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NeuralOpts {
    /// Recurrent state width [default: 64]
    #[arg(long)]
    hidden: Option<usize>,
    /// Decoder unroll steps [default: 1]
    #[arg(long)]
    decoder_steps: Option<usize>,
    /// Maximum training epochs [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 256]
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping patience, epochs [default: 10]
    #[arg(long)]
    patience: Option<usize>,
    /// Fraction of rows (last by time) held out for validation [default: 0.1]
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Global gradient-norm clip [default: 5]
    #[arg(long)]
    clip_norm: Option<f64>,
}

#[derive(Args)]
struct GbrtOpts {
    /// Boosting rounds [default: 200]
    #[arg(long)]
    rounds: Option<usize>,
    /// Maximum tree depth [default: 6 single / 8 multi]
    #[arg(long)]
    depth: Option<usize>,
    /// Minimum rows per leaf [default: 20]
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Stage shrinkage factor [default: 0.1]
    #[arg(long)]
    shrinkage: Option<f64>,
    /// Quantile of |residual| used as the Huber delta [default: 0.9]
    #[arg(long)]
    delta_quantile: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Config file with `key = value` lines (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hourly GHI CSV [default: data.csv]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Lead time T in hours, 1..=24 [default: 1]
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=24))]
    lead: Option<u32>,
    /// Calendar years to train on, e.g. 2000-2010 [default: all years]
    #[arg(long)]
    train_years: Option<String>,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    neural: NeuralOpts,
    #[command(flatten)]
    gbrt: GbrtOpts,
    /// Output model path [default: model.ghim]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the raw (unscaled) training rows to this CSV
    #[arg(long)]
    dump_features: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Config file with `key = value` lines (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Saved model to score
    #[arg(long)]
    model_file: PathBuf,
    /// Hourly GHI CSV [default: data.csv]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Score a raw feature dump (as written by train --dump-features)
    /// instead of building features from --data
    #[arg(long, conflicts_with = "data")]
    features: Option<PathBuf>,
    /// Calendar years to score on [default: the last year in the data]
    #[arg(long)]
    test_years: Option<String>,
    /// Target location id [default: the grid-center location]
    #[arg(long)]
    target: Option<u32>,
    /// Also write a one-row report CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Config file with `key = value` lines (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hourly GHI CSV [default: data.csv]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Lead times to sweep, e.g. 1-24 or 1,6,12 [default: 1-24]
    #[arg(long)]
    leads: Option<String>,
    /// Concurrent per-lead jobs [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    /// Calendar years to train on [default: all but the last year]
    #[arg(long)]
    train_years: Option<String>,
    /// Calendar years to score on [default: the last year]
    #[arg(long)]
    test_years: Option<String>,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    neural: NeuralOpts,
    #[command(flatten)]
    gbrt: GbrtOpts,
    /// Output report CSV path [default: report.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Report CSV from the single-location sweep
    #[arg(long)]
    single: PathBuf,
    /// Report CSV from the multi-location sweep
    #[arg(long)]
    multi: PathBuf,
    /// Also write the merged report CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses and runs a full command line, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Synth(a) => commands::synth(a),
        Cmd::Train(a) => commands::train(a),
        Cmd::Eval(a) => commands::eval(a),
        Cmd::Sweep(a) => commands::sweep(a),
        Cmd::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Diverged(_) => 3,
        _ => 2,
    }
}
