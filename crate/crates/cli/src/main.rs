use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use divopt::run;

/// Optimal dividend and reinsurance policies on regime-switching surplus
/// models.
#[derive(Parser)]
#[command(name = "divopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a run configuration and write value.csv, barrier.csv, and
    /// summary.json.
    Solve {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a solved policy at each probe and check it against the grid
    /// value; writes verify.json.
    Verify {
        /// Run configuration (JSON) with a verify block.
        #[arg(long)]
        config: PathBuf,
        /// Directory written by a previous solve.
        #[arg(long)]
        solution: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve at several grid steps and write sweep.csv with probe-value
    /// changes and empirical convergence orders.
    Sweep {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated grid steps, e.g. 0.2,0.1,0.05.
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<f64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the closed-form single-regime barrier and value table.
    Oracle {
        /// Drift of the uncontrolled surplus.
        #[arg(long)]
        mu: f64,
        /// Squared volatility of the uncontrolled surplus.
        #[arg(long)]
        sigma2: f64,
        /// Discount rate.
        #[arg(long)]
        r: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve { config, out } => run::cmd_solve(&config, &out),
        Command::Verify {
            config,
            solution,
            out,
        } => run::cmd_verify(&config, &solution, &out),
        Command::Sweep { config, h, out } => run::cmd_sweep(&config, &h, &out),
        Command::Oracle { mu, sigma2, r } => run::cmd_oracle(mu, sigma2, r),
    };
    ExitCode::from(code as u8)
}
