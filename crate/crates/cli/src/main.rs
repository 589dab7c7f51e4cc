//! Command-line front end for the maize classification pipeline.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tallcrop::ErrorClass;

use config::{parse_months, Loaded, Overrides};

#[derive(Parser)]
#[command(
    name = "tallcrop",
    version,
    about = "Maize mapping from lidar heights and optical time series"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, replacing `master_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Comma-separated months, e.g. `7,8,9` or `8`.
    #[arg(long, global = true, value_parser = |s: &str| parse_months(s).map(Months))]
    months: Option<Months>,
    /// Regime name, or `all`.
    #[arg(long, global = true)]
    regime: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone)]
struct Months(Vec<u32>);

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse and quality-filter shots, then attach labels.
    Ingest,
    /// Write RH and harmonic feature matrices.
    Features,
    /// Train and save a model.
    Train,
    /// Run classification regimes over repeated spatial splits.
    Experiment,
    /// Produce a wall-to-wall maize map.
    Map,
    /// Generate synthetic regions.
    Synth,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<tallcrop::Error>())
        .map(tallcrop::Error::class);
    match class {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Validation) => 3,
        Some(ErrorClass::Runtime) | None => 4,
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let Some(path) = &cli.config else {
        return Err(tallcrop::Error::Config("--config is required".into()).into());
    };
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        months: cli.months.as_ref().map(|m| m.0.clone()),
        regime: cli.regime.clone(),
    };
    let loaded = Loaded::load(path, &overrides)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(loaded.config.workers)
        .build_global()?;
    match cli.command {
        Command::Ingest => commands::cmd_ingest(&loaded),
        Command::Features => commands::cmd_features(&loaded),
        Command::Train => commands::cmd_train(&loaded),
        Command::Experiment => commands::cmd_experiment(&loaded),
        Command::Map => commands::cmd_map(&loaded),
        Command::Synth => commands::cmd_synth(&loaded),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
