//! Batch front end for staged Weierstrass-sampler experiments. Every
//! subcommand reads the same TOML config; stages write into the output
//! directory and keep the manifest current.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use weierstrass_mcmc::config::ExperimentConfig;
use weierstrass_mcmc::error::Error;
use weierstrass_mcmc::pipeline::RunContext;

#[derive(Parser)]
#[command(name = "wmcmc", version, about = "Parallel MCMC with Weierstrass recombination")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; 0 uses every core. Outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    workers: usize,

    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,

    /// Output directory, overriding experiment.out_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace a directory holding a different or completed run.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dataset and the true-parameter record.
    Generate,
    /// Partition the data and run every subset chain (plus the reference).
    Run,
    /// Recombine subset draws with each configured method.
    Combine,
    /// Score combined draws against the reference and emit tables.
    Evaluate,
    /// Run generate, run, combine, and evaluate; replicates when configured.
    Pipeline,
}

fn execute(cli: &Cli) -> weierstrass_mcmc::Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let config = ExperimentConfig::load(config_path)?;
    let ctx = RunContext::new(config, cli.out.clone(), cli.workers, cli.seed, cli.force)?;
    match cli.command {
        Command::Generate => ctx.generate(),
        Command::Run => ctx.run(),
        Command::Combine => ctx.combine(),
        Command::Evaluate => ctx.evaluate(),
        Command::Pipeline => {
            if !ctx.pipeline()? {
                eprintln!("up to date: {}", ctx.out_dir.display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
