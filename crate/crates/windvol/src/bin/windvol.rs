//! Command-line pipeline for spatiotemporal wind-speed volatility modelling.
//!
//! Each subcommand runs one pipeline stage against a TOML experiment
//! configuration and writes hash-stamped artifacts into the output
//! directory. Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use windvol::pipeline::{ExperimentConfig, Pipeline, Stage};
use windvol::WindvolError;

#[derive(Parser)]
#[command(name = "windvol", version, about = "Spatiotemporal wind-speed volatility modelling")]
struct Cli {
    /// Experiment configuration (TOML). Omit to use the bundled synthetic
    /// preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for within-stage parallelism (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load panels, compute descriptive statistics, project coordinates.
    Ingest,
    /// Seasonal decomposition and AR(1) filtering per station.
    Preprocess,
    /// Build the configured spatial weight matrices.
    Weights,
    /// Residual diagnostics: serial, ARCH, and spatial autocorrelation.
    Diagnose,
    /// Per-station GARCH and EGARCH benchmarks.
    FitUni,
    /// Joint spatiotemporal ARMA-GARCH model.
    FitSt,
    /// Spatial dynamic panel mean model (SDPD innovation track).
    FitSdpd,
    /// Bivariate spatiotemporal log-ARCH across both heights.
    FitMv,
    /// One-step-ahead variance forecasts over the test window.
    Forecast,
    /// Score forecasts against volatility proxies.
    Evaluate,
    /// Assemble the comparison report with per-block minima.
    Report,
    /// Run the complete study design end to end.
    Reproduce,
}

fn exit_code_for(err: &WindvolError) -> u8 {
    match err {
        WindvolError::ConfigInvalid(_) | WindvolError::BadLambda(_) => 2,
        WindvolError::Io(_)
        | WindvolError::Csv(_)
        | WindvolError::MissingCell { .. }
        | WindvolError::DuplicateRow { .. }
        | WindvolError::NonDailySpacing { .. }
        | WindvolError::UnparseableValue { .. }
        | WindvolError::EmptyPanel
        | WindvolError::BoundaryOutsideRange(_)
        | WindvolError::MissingUpstream(_)
        | WindvolError::DataUnavailable(_) => 3,
        WindvolError::Station { source, .. } => exit_code_for(source),
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, WindvolError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("windvol-out"));
            ExperimentConfig::synthetic_preset(&out)
        }
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    let pipeline = Pipeline::new(cfg)?;
    match cli.command {
        Command::Ingest => pipeline.run_stage(Stage::Ingest),
        Command::Preprocess => pipeline.run_stage(Stage::Preprocess),
        Command::Weights => pipeline.run_stage(Stage::Weights),
        Command::Diagnose => pipeline.run_stage(Stage::Diagnose),
        Command::FitUni => pipeline.run_stage(Stage::FitUni),
        Command::FitSt => pipeline.run_stage(Stage::FitSt),
        Command::FitSdpd => pipeline.run_stage(Stage::FitSdpd),
        Command::FitMv => pipeline.run_stage(Stage::FitMv),
        Command::Forecast => pipeline.run_stage(Stage::Forecast),
        Command::Evaluate => pipeline.run_stage(Stage::Evaluate),
        Command::Report => pipeline.run_stage(Stage::Report),
        Command::Reproduce => pipeline.reproduce(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
