use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cdf;
mod manifest;
mod sim;
mod solve;

#[derive(Parser, Debug)]
#[command(name = "wsrm", version, about = "Weighted sum-rate maximization for the multiuser MISO broadcast channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance file; writes a rate report (JSON) and a convergence trace (CSV).
    Solve(solve::SolveArgs),
    /// Cold- and warm-started two-step ZF against the gradient optimum on seeded random instances.
    Cdf(cdf::CdfArgs),
    /// Two-cell downlink simulation; writes per-user long-term rates (CSV) and run summaries (JSON).
    Cellsim(sim::CellsimArgs),
}

/// A failed command. Input problems exit with 2, solver non-convergence with 3.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Solver(String),
}

impl From<wsrm::Error> for Failure {
    fn from(e: wsrm::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

/// Rayon pool of `jobs` threads, or rayon's default size.
pub fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Input("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Input(e.to_string()))
}

pub fn bits(nats: f64) -> f64 {
    nats * std::f64::consts::LOG2_E
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Solve(a) => solve::run(a),
        Command::Cdf(a) => cdf::run(a),
        Command::Cellsim(a) => sim::run(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failed: {msg}");
            ExitCode::from(3)
        }
    }
}
