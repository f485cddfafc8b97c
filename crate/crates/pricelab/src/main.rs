use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pricelab::commands::{cmd_bound, cmd_run, cmd_sweep, Overrides};
use pricelab::config::ExperimentConfig;
use pricelab::CliError;

/// Contextual dynamic pricing experiments.
#[derive(Parser)]
#[command(name = "pricelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy at every horizon and write summary.csv.
    Run(Common),
    /// Repeat `run` for each value of one hyperparameter and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Hyperparameter to vary (gamma, price, rho1, rho2, sparsity,
        /// explore_lo, explore_hi, round_cap).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Print the confidence scale and regret bound per horizon; write bound.csv.
    Bound(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `run.output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to PRICELAB_THREADS, then all cores).
    #[arg(long)]
    parallel: Option<usize>,
    /// Write per-replication traces.
    #[arg(long)]
    traces: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        Overrides {
            out: self.out.clone(),
            reps: self.reps,
            seed: self.seed,
            parallel: self.parallel,
            traces: self.traces,
        }
        .apply(&mut cfg);
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => cmd_run(&c.load()?).map(drop),
        Command::Sweep {
            common,
            param,
            values,
        } => cmd_sweep(&common.load()?, &param, &values),
        Command::Bound(c) => cmd_bound(&c.load()?).map(drop),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pricelab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
