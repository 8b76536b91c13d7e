//! `texgan`: simulate data, train the denoisers, evaluate every method and
//! write the comparison report.
//!
//! Each stage reads what earlier stages left in the output directory, so
//! `simulate`, `train`, `evaluate` and `report` can be run one at a time;
//! `run-all` does all four in one process.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use texgan_core::experiment::{
    clear_failed_marker, evaluate_stage, report_stage, run_experiment, simulate_stage, train_stage, write_manifest,
    ExperimentConfig,
};
use texgan_core::report::{render_markdown, MetricReport};

#[derive(Parser)]
#[command(name = "texgan", version, about = "Texture-preserving CT denoising experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantoms and simulated FBP inputs.
    Simulate(Common),
    /// Train the MSE-only and adversarial generators.
    Train(Common),
    /// Reconstruct the eval set with every method and compute metrics.
    Evaluate(Common),
    /// Normalize metrics against the original and write report.csv / report.md.
    Report(Common),
    /// All stages in order.
    RunAll(Common),
    /// Print the default configuration as JSON.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::desk(),
        };
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate().context("invalid config")?;
        Ok(config)
    }
}

fn print_table(reports: &[MetricReport]) -> Result<()> {
    print!("{}", render_markdown(reports)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::DefaultConfig => {
            println!("{}", ExperimentConfig::desk().to_json());
            return Ok(());
        }
        Command::Simulate(c) | Command::Train(c) | Command::Evaluate(c) | Command::Report(c) | Command::RunAll(c) => c,
    };
    let config = common.load()?;
    let out = config.output_dir.display().to_string();
    if let Command::RunAll(_) = cli.command {
        print_table(&run_experiment(&config)?)?;
        eprintln!("wrote {out}");
        return Ok(());
    }
    clear_failed_marker(&config.output_dir)?;
    match cli.command {
        Command::Simulate(_) => {
            write_manifest(&config)?;
            let (train, eval) = simulate_stage(&config)?;
            eprintln!("simulated {} train / {} eval pairs into {out}", train.len(), eval.len());
        }
        Command::Train(_) => {
            train_stage(&config, None)?;
            eprintln!("checkpoints in {out}/train");
        }
        Command::Evaluate(_) => {
            let metrics = evaluate_stage(&config, None)?;
            eprintln!("evaluated {} methods into {out}/eval", metrics.len());
        }
        _ => print_table(&report_stage(&config, None)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
