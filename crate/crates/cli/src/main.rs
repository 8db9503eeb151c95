//! `wbomd`: runs the density, correlation, weight and order-verification experiments.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{ExperimentConfig, Preset};
use output::Output;

#[derive(Parser)]
#[command(name = "wbomd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON document merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value = "paper")]
    preset: Preset,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Quantum and MD position densities at one mass ratio.
    Density,
    /// Quantum and MD position correlations over the configured lags.
    Correlate,
    /// Surface weights by quadrature and by ground-surface Langevin paths.
    Weights,
    /// Langevin estimates of x^2 and p^2 per surface and on the merged potential.
    SampleLangevin,
    /// Convergence orders of the diagonalization recursion.
    DiagCheck,
    /// Weyl trace identities and Moyal remainder orders.
    WeylCheck,
    /// Density error against the mass ratio for each gap.
    ConvergeDensity,
    /// Correlation error against the mass ratio.
    ConvergeCorrelation,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Correlate => "correlate",
            Command::Weights => "weights",
            Command::SampleLangevin => "sample-langevin",
            Command::DiagCheck => "diag-check",
            Command::WeylCheck => "weyl-check",
            Command::ConvergeDensity => "converge-density",
            Command::ConvergeCorrelation => "converge-correlation",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(config::ConfigError {
                    field: "config".into(),
                    message: format!("{}: {e}", path.display()),
                })
            })?;
            ExperimentConfig::from_json(cli.preset, &text)?
        }
        None => ExperimentConfig::preset(cli.preset),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = load(cli)?;
    let out = Output::new(&cli.out, &cfg.digest(), cli.command.name())?;
    let job = || match cli.command {
        Command::Density => commands::density(&cfg, &out),
        Command::Correlate => commands::correlate(&cfg, &out),
        Command::Weights => commands::weights(&cfg, &out),
        Command::SampleLangevin => commands::sample_langevin(&cfg, &out),
        Command::DiagCheck => commands::diag_check(&cfg, &out),
        Command::WeylCheck => commands::weyl_check(&cfg, &out),
        Command::ConvergeDensity => commands::converge_density(&cfg, &out),
        Command::ConvergeCorrelation => commands::converge_correlation(&cfg, &out),
    };
    match cli.threads {
        Some(0) => Err(CliError::Config(config::ConfigError {
            field: "threads".into(),
            message: "must be positive".into(),
        })),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?
            .install(job),
        None => job(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("wbomd {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
