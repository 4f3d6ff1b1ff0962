//! Command-line driver for the SpikePack experiments.
//!
//! Exit codes: 0 success, 1 property violation, 2 usage error, 3 I/O error or
//! corrupt input file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spikepack_core::neurons::{Comparator, Rounding};
use spikepack_core::Error;

pub mod commands;
pub mod config;

use config::{ReportFormat, RunConfig, SimKind};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPIKEPACK_OUT";
pub const DEFAULT_OUT: &str = "spikepack-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("property violation: {0}")]
    Property(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Corrupt(_) | Error::Csv(_) | Error::Json(_) | Error::Dataset(_) => {
                CliError::Io(e.to_string())
            }
            Error::Diverged { .. } | Error::NonFinite(_) => CliError::Property(e.to_string()),
            Error::Shape(_) | Error::Domain(_) | Error::InvalidParameter { .. } | Error::UnsupportedLayer(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "spikepack", version, about = "SpikePack spiking-neuron experiments")]
pub struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $SPIKEPACK_OUT or ./spikepack-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Format of tabular reports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<ReportFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serial decoder vs parallel quantizer and round-trip property suites.
    Equiv(EquivArgs),
    /// Analytic and Monte Carlo mutual information over an (N, T) grid.
    Mi(MiArgs),
    /// Direct training of a SpikePack network.
    Train(TrainArgs),
    /// Train or load a ReLU ANN, calibrate thresholds and convert.
    Convert(ConvertArgs),
    /// Evaluate a model container on a dataset.
    Infer(InferArgs),
    /// Latency and energy of LIF and SpikePack runs on the processor model.
    Simulate(SimulateArgs),
    /// Collect earlier outputs into summary tables.
    Report(ReportArgs),
}

fn parse_comparator(s: &str) -> Result<Comparator, String> {
    match s {
        "at-least" => Ok(Comparator::AtLeast),
        "strictly-greater" => Ok(Comparator::StrictlyGreater),
        _ => Err("expected `at-least` or `strictly-greater`".into()),
    }
}

fn parse_rounding(s: &str) -> Result<Rounding, String> {
    match s {
        "greedy-floor" => Ok(Rounding::GreedyFloor),
        "nearest" => Ok(Rounding::Nearest),
        _ => Err("expected `greedy-floor` or `nearest`".into()),
    }
}

#[derive(Debug, Args, Default)]
pub struct EquivArgs {
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long, value_parser = parse_comparator)]
    pub comparator: Option<Comparator>,
    #[arg(long, value_parser = parse_rounding)]
    pub rounding: Option<Rounding>,
    /// Restrict the suite to one τ.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_timesteps: Option<usize>,
    #[arg(long)]
    pub exhaustive_roundtrip: bool,
}

#[derive(Debug, Args, Default)]
pub struct MiArgs {
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long = "timesteps", value_delimiter = ',')]
    pub timesteps: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub lif_theta: Option<f64>,
    /// Only the single N = 16, T = 16 configuration.
    #[arg(long)]
    pub single: bool,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ConvertArgs {
    #[arg(long)]
    pub ann: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Held-out data; a fresh draw of the built-in set when absent.
    #[arg(long)]
    pub test_data: Option<String>,
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Hidden widths of the MLP trained when no --ann is given.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Window lengths to convert for, e.g. 1,2,4,8.
    #[arg(long, value_delimiter = ',')]
    pub timesteps: Option<Vec<usize>>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub percentile: Option<f64>,
    #[arg(long)]
    pub calib_fraction: Option<f64>,
    #[arg(long)]
    pub calib_shuffle: bool,
}

#[derive(Debug, Args, Default)]
pub struct InferArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub kind: Option<SimKind>,
    #[arg(long)]
    pub lif_timesteps: Option<usize>,
    #[arg(long)]
    pub lif_leak: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sparsity: Option<Vec<f64>>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub layer: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ReportArgs {
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

/// File values first, then flags.
pub fn merge(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set!(cfg.seed, cli.seed);
    set!(cfg.format, cli.format);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match &cli.command {
        Command::Equiv(a) => {
            let c = &mut cfg.equiv;
            set!(c.cases, a.cases);
            set!(c.comparator, a.comparator);
            set!(c.rounding, a.rounding);
            set!(c.max_timesteps, a.max_timesteps);
            if let Some(t) = a.tau {
                c.taus = vec![t];
            }
            c.exhaustive_roundtrip |= a.exhaustive_roundtrip;
        }
        Command::Mi(a) => {
            let c = &mut cfg.mi;
            set!(c.n, a.n.clone());
            set!(c.timesteps, a.timesteps.clone());
            set!(c.p, a.p);
            set!(c.sigma2, a.sigma2);
            set!(c.tau, a.tau);
            set!(c.samples, a.samples);
            set!(c.lif_theta, a.lif_theta);
            if a.theta.is_some() {
                c.theta = a.theta;
            }
            if a.single {
                c.n = vec![16];
                c.timesteps = vec![16];
            }
        }
        Command::Train(a) => {
            let c = &mut cfg.train;
            set!(c.data, a.data.clone());
            set!(c.samples, a.samples);
            set!(c.hidden, a.hidden.clone());
            set!(c.timesteps, a.timesteps);
            set!(c.tau, a.tau);
            set!(c.lr, a.lr);
            set!(c.epochs, a.epochs);
            set!(c.batch, a.batch);
        }
        Command::Convert(a) => {
            let c = &mut cfg.convert;
            if a.ann.is_some() {
                c.ann = a.ann.clone();
            }
            if a.test_data.is_some() {
                c.test_data = a.test_data.clone();
            }
            set!(c.data, a.data.clone());
            set!(c.samples, a.samples);
            set!(c.test_samples, a.test_samples);
            set!(c.hidden, a.hidden.clone());
            set!(c.epochs, a.epochs);
            set!(c.lr, a.lr);
            set!(c.batch, a.batch);
            set!(c.timesteps, a.timesteps.clone());
            set!(c.tau, a.tau);
            set!(c.percentile, a.percentile);
            set!(c.calib_fraction, a.calib_fraction);
            c.calib_shuffle |= a.calib_shuffle;
        }
        Command::Infer(a) => {
            let c = &mut cfg.infer;
            if a.model.is_some() {
                c.model = a.model.clone();
            }
            set!(c.data, a.data.clone());
            set!(c.samples, a.samples);
        }
        Command::Simulate(a) => {
            let c = &mut cfg.simulate;
            if a.model.is_some() {
                c.model = a.model.clone();
            }
            if a.trace.is_some() {
                c.trace = a.trace.clone();
            }
            set!(c.data, a.data.clone());
            set!(c.samples, a.samples);
            set!(c.kind, a.kind);
            set!(c.lif_timesteps, a.lif_timesteps);
            set!(c.lif_leak, a.lif_leak);
            set!(c.sparsity, a.sparsity.clone());
            set!(c.layer, a.layer);
        }
        Command::Report(a) => {
            if a.dir.is_some() {
                cfg.report.dir = a.dir.clone();
            }
        }
    }
    Ok(cfg)
}

pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("spikepack: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = merge(cli)?;
    let out = output_dir(&cfg);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("run_config.toml"), cfg.to_toml()?)?;
    match &cli.command {
        Command::Equiv(_) => commands::equiv::run(&cfg, &out),
        Command::Mi(_) => commands::mi::run(&cfg, &out),
        Command::Train(_) => commands::train::run(&cfg, &out),
        Command::Convert(_) => commands::convert::run(&cfg, &out),
        Command::Infer(_) => commands::infer::run(&cfg, &out),
        Command::Simulate(_) => commands::simulate::run(&cfg, &out),
        Command::Report(_) => commands::report::run(&cfg, &out),
    }
}
