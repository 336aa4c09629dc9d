use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modalflow::cli::{self, CliOutcome, CommonOptions};

#[derive(Parser)]
#[command(
    name = "modalflow",
    version,
    about = "Equilibria, link incentives and profit sharing for multi-modal transport networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// OD-pair parallelism inside the solvers; 1 is strictly reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Solver overrides, e.g. --config eps_flow=1e-8 --config alpha.p=5
    #[arg(long = "config", global = true, value_name = "KEY=VALUE")]
    config: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stochastic user equilibrium at a fixed incentive
    Equilibrium {
        scenario: PathBuf,
        /// JSON array of per-link incentives; zeros when omitted
        #[arg(long)]
        incentive: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize link incentives with the two time-scale loop
    Optimize {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Allocate an optimized run's profit across providers
    Share {
        scenario: PathBuf,
        /// Directory holding a prior `optimize` run
        #[arg(long = "incentive-result")]
        incentive_result: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a random scale-free scenario file
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        od: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run equilibrium, optimize and share into one output directory
    Pipeline {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> modalflow::Result<CliOutcome> {
    let opts = CommonOptions {
        threads: cli.threads,
        overrides: CommonOptions::parse_overrides(&cli.config)?,
    };
    match cli.command {
        Command::Equilibrium { scenario, incentive, out } => {
            cli::cmd_equilibrium(&scenario, incentive.as_deref(), &out, &opts)
        }
        Command::Optimize { scenario, out } => cli::cmd_optimize(&scenario, &out, &opts),
        Command::Share { scenario, incentive_result, out } => {
            cli::cmd_share(&scenario, &incentive_result, &out, &opts)
        }
        Command::Generate { n, m, od, k, seed, out } => {
            cli::cmd_generate(n, m, od, k, seed, &out).map(|()| CliOutcome::Converged)
        }
        Command::Pipeline { scenario, out } => cli::cmd_pipeline(&scenario, &out, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
