//! `orderflow` command-line tool.
//!
//! Every subcommand writes CSV or JSON artifacts and echoes the resolved
//! configuration on stderr. Outputs depend only on the configuration and
//! the seed, never on `--threads`.

mod commands;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "orderflow", version, about = "Two-layer Hawkes order-flow toolkit")]
struct Cli {
    /// Master seed; overrides the `seed` key of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mittag-Leffler function, density and distribution function.
    #[command(subcommand)]
    Ml(MlCommand),
    /// Kernel utilities.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Simulate two-layer Hawkes event streams, one file per path.
    Simulate(SimulateArgs),
    /// Scaling-limit and fractional processes.
    #[command(subcommand)]
    Limit(LimitCommand),
    /// Rescale an events file to its macroscopic version.
    Rescale(RescaleArgs),
    /// Estimate a Hurst exponent from a series file.
    Estimate(EstimateArgs),
    /// Impact curves and metaorder experiments.
    #[command(subcommand)]
    Impact(ImpactCommand),
    /// Bin trade files into signed and unsigned flow series.
    Ingest(IngestArgs),
}

#[derive(Subcommand)]
enum MlCommand {
    /// `E_{α,β}(x)`.
    Eval {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Mittag-Leffler density `f^{α,λ}(x)`.
    Density {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        x: f64,
    },
    /// Mittag-Leffler distribution function `F^{α,λ}(x)`.
    Cdf {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        x: f64,
    },
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Resolvent of `a·φ` for the shifted Pareto kernel, columns `t,psi`.
    Resolvent {
        #[arg(long)]
        alpha: f64,
        /// Branching ratio `a`.
        #[arg(long)]
        a: f64,
        /// Grid step.
        #[arg(long)]
        h: f64,
        #[arg(long)]
        horizon: f64,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of paths; overrides the `paths` key.
    #[arg(long)]
    paths: Option<usize>,
    /// Core layer only.
    #[arg(long)]
    core_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Process {
    Core,
    Reaction,
    Signed,
    Fbm,
    Mixed,
}

#[derive(Subcommand)]
enum LimitCommand {
    /// One path on `[0, 1]` (`steps` cells); columns `t,value,...`.
    Simulate {
        #[arg(long, value_enum)]
        process: Process,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Flow {
    Core,
    Unsigned,
    Signed,
}

#[derive(Args)]
struct RescaleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Events file written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "core")]
    kind: Flow,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Method {
    Fbm,
    Mixed,
    Volume,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    input: PathBuf,
    /// Base lag in samples (the bin width for `volume`).
    #[arg(long, default_value_t = 1)]
    delta: usize,
    /// Largest autocovariance lag for `volume`.
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    /// Truncation constant for `volume`, in standard deviations.
    #[arg(long, default_value_t = 3.0)]
    truncate: f64,
    /// Series column; defaults to `value`, or the cumulative flow for binned trade files.
    #[arg(long)]
    column: Option<String>,
}

#[derive(Subcommand)]
enum ImpactCommand {
    /// Analytic normalized impact curve, columns `t,impact`.
    Curve {
        #[arg(long)]
        h0: f64,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 300)]
        points: usize,
    },
    /// Monte Carlo metaorder impact; writes `curve.csv` and `report.json`.
    Metaorder {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        paths: usize,
        /// Child orders do not spawn core children.
        #[arg(long)]
        exogenous: bool,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// Glob of trade files.
    #[arg(long)]
    input: String,
    #[arg(long, default_value = "09:30-16:00")]
    session: String,
    /// Bin width in seconds.
    #[arg(long, default_value_t = 60.0)]
    delta: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building the thread pool")?;
    }
    let ctx = commands::Context { seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Ml(MlCommand::Eval { alpha, beta, x }) => commands::ml_eval(alpha, beta, x),
        Command::Ml(MlCommand::Density { alpha, lambda, x }) => commands::ml_density(alpha, lambda, x),
        Command::Ml(MlCommand::Cdf { alpha, lambda, x }) => commands::ml_cdf(alpha, lambda, x),
        Command::Kernel(KernelCommand::Resolvent { alpha, a, h, horizon }) => {
            commands::resolvent(&ctx, alpha, a, h, horizon)
        }
        Command::Simulate(args) => commands::simulate(&ctx, args.config.as_deref(), args.paths, args.core_only),
        Command::Limit(LimitCommand::Simulate { process, config }) => {
            commands::limit_simulate(&ctx, process, config.as_deref())
        }
        Command::Rescale(args) => commands::rescale(&ctx, args.config.as_deref(), &args.input, args.kind),
        Command::Estimate(args) => commands::estimate(
            &ctx,
            args.method,
            &args.input,
            args.column.as_deref(),
            args.delta,
            args.max_lag,
            args.truncate,
        ),
        Command::Impact(ImpactCommand::Curve { h0, t_max, points }) => commands::impact_curve(&ctx, h0, t_max, points),
        Command::Impact(ImpactCommand::Metaorder { config, rate, duration, paths, exogenous }) => {
            commands::metaorder(&ctx, config.as_deref(), rate, duration, paths, exogenous)
        }
        Command::Ingest(args) => commands::ingest(&ctx, &args.input, &args.session, args.delta),
    }
}
