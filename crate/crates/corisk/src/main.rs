use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corisk::config::Loaded;
use corisk::stages;

/// Near-miss based crash risk estimation.
///
/// Each command reads one JSON configuration. Relative paths in it are
/// resolved against the directory of the configuration file, and outputs
/// go to `<paths.work>/<stage>/` together with a `manifest.json`.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "corisk", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smooth raw trajectories and derive speed, heading and controls.
    Preprocess(Common),
    /// Forecast every frame and record near-miss events.
    Detect(Common),
    /// Group events by site and extract block maxima with covariates.
    Blocks(Common),
    /// Fit the hierarchical extreme value models by MCMC.
    Fit(Common),
    /// Compute crash probabilities and crash risk per group.
    Risk(Common),
    /// Sweep the severity threshold and report AUC against observed outcomes.
    Validate(Common),
    /// Generate a synthetic corridor with ground-truth events.
    Synth(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline configuration file (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: available parallelism].
    #[arg(long, short)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Preprocess(a) => ("preprocess", a),
        Command::Detect(a) => ("detect", a),
        Command::Blocks(a) => ("blocks", a),
        Command::Fit(a) => ("fit", a),
        Command::Risk(a) => ("risk", a),
        Command::Validate(a) => ("validate", a),
        Command::Synth(a) => ("synth", a),
    };
    let result = Loaded::from_file(&args.config, args.seed, args.jobs).and_then(|cfg| stages::run(stage, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
