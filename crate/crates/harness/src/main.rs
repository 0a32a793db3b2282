//! `epcnet` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epcnet_harness::error::{HarnessError, HarnessResult};
use epcnet_harness::{bench, eval, generate, landscape, sweep, train, ExperimentConfig};

#[derive(Parser)]
#[command(name = "epcnet", version, about = "Ensemble power-control networks for interference channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// EsN0 levels in dB; overrides `esn0_db`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    esn0: Option<Vec<f64>>,
    /// Training iterations per member.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the test set.
    Generate(Common),
    /// Train an ensemble and write its manifest.
    Train(Common),
    /// Evaluate an ensemble and the configured baselines on a test set.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Ensemble manifest written by `train`.
        #[arg(long)]
        models: PathBuf,
        /// Dataset written by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and evaluate one ensemble per penalty weight.
    LambdaSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Penalty weights; overrides `sweep.lambdas`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// WMMSE restart statistics per EsN0 level.
    Landscape(Common),
    /// Single-threaded controller timing.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Optional ensemble manifest; an untrained network is timed otherwise.
        #[arg(long)]
        models: Option<PathBuf>,
    },
}

fn load(common: &Common) -> HarnessResult<(ExperimentConfig, u64)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(esn0) = &common.esn0 {
        cfg.esn0_db = esn0.clone();
    }
    if let Some(it) = common.iterations {
        cfg.training.iterations = it;
    }
    if let Some(m) = common.ensemble_size {
        cfg.ensemble_size = m;
    }
    if let Some(n) = common.test_size {
        cfg.data.test_size = n;
    }
    cfg.validate()?;
    let seed = cfg.resolve_seed(common.seed)?;
    Ok((cfg, seed))
}

fn print_json<T: serde::Serialize>(value: &T) -> HarnessResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Generate(common) => {
            let (cfg, seed) = load(&common)?;
            let (_, report) = generate::cmd_generate(&cfg, seed)?;
            print_json(&report)
        }
        Command::Train(common) => {
            let (cfg, seed) = load(&common)?;
            let (report, _) = train::cmd_train(&cfg, seed)?;
            print_json(&report)
        }
        Command::Eval { common, models, data } => {
            let (cfg, seed) = load(&common)?;
            let report = eval::cmd_eval(&cfg, &models, &data, seed)?;
            print_json(&report.controllers)
        }
        Command::LambdaSweep { common, data, lambdas } => {
            let (cfg, seed) = load(&common)?;
            let ds = epcnet_core::io::read_dataset(&data)?;
            generate::check_dataset(&cfg, &ds, &data)?;
            let lambdas = lambdas.unwrap_or_else(|| cfg.sweep.lambdas.clone());
            let report = sweep::cmd_lambda_sweep(&cfg, &lambdas, &ds.samples, seed)?;
            print_json(&report)
        }
        Command::Landscape(common) => {
            let (cfg, seed) = load(&common)?;
            let report = landscape::cmd_landscape(&cfg, seed)?;
            print_json(&report)
        }
        Command::Bench { common, models } => {
            let (cfg, seed) = load(&common)?;
            let ensemble = match &models {
                Some(path) => Some(epcnet_core::io::load_ensemble(path)?.0),
                None => None,
            };
            let report = bench::cmd_bench(&cfg, ensemble.as_ref(), seed)?;
            print_json(&report)
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
