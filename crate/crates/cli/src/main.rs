use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Gravitational quantum state interferometry: detection densities, event
/// sampling and maximum-likelihood estimation of g.
#[derive(Debug, Parser)]
#[command(name = "gqs", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; built-in defaults when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, default_value = "gqs-out")]
    pub out: PathBuf,
    /// overwrite existing outputs
    #[arg(long, global = true)]
    pub force: bool,
    /// worker threads (defaults to all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// master seed, overriding statistics.seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// configuration override, e.g. --set packet.kick_velocity=0.8
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// eigenfunction table cache
    #[arg(long, global = true, default_value = ".gqs-cache")]
    pub cache_dir: PathBuf,
    /// more log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Sampler {
    /// exact transport through the anamorphosis
    Transport,
    /// inverse CDF on the tabulated plate density
    Grid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Momentum density at the mirror end and detection density on the plate
    Density {
        /// also build the tabulated density with successive refinements
        #[arg(long)]
        grid_refine: bool,
    },
    /// Sample detection events at the configured g
    Sample {
        /// number of events (default statistics.n_events)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value = "transport")]
        sampler: Sampler,
    },
    /// Maximum-likelihood estimate of g from an event file or a fresh sample
    Estimate {
        /// CSV with columns X_m,T_s
        #[arg(long)]
        events: Option<PathBuf>,
        /// also compute the Fisher information and Cramér-Rao bound
        #[arg(long)]
        fisher: bool,
    },
    /// Repeated simulated experiments; resumes an interrupted run
    Ensemble,
    /// Quantum and classical ensembles at matched parameters
    Compare,
    /// Airy zeros λ_n
    Zeros {
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// Quick numerical self-checks
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Density { grid_refine } => commands::density(&cli.common, grid_refine),
        Command::Sample { n, sampler } => commands::sample(&cli.common, n, sampler),
        Command::Estimate { events, fisher } => commands::estimate(&cli.common, events, fisher),
        Command::Ensemble => commands::ensemble(&cli.common),
        Command::Compare => commands::compare(&cli.common),
        Command::Zeros { count } => commands::zeros(&cli.common, count),
        Command::Selftest => commands::selftest(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.error);
            ExitCode::from(e.code)
        }
    }
}
