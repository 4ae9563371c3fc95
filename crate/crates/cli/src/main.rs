use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use varopt_core::harness::experiment::CellResult;
use varopt_core::harness::{compare, run_experiment, sweep, ExperimentConfig};
use varopt_core::optimizers::OptimizerKind;
use varopt_core::selftest::run_selftest;
use varopt_core::Error;

/// Runs variational stochastic-optimizer experiments.
#[derive(Parser)]
#[command(name = "varopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds.
    Run { config: PathBuf },
    /// Run the cross product of a parameter grid, e.g. `model.sigma=0,0.1;model.m=10,50`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: String,
    },
    /// Run one configuration under several optimizers on the same seeds.
    Compare {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        optimizers: Vec<String>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn print_cells(cells: &[CellResult]) -> ExitCode {
    let mut failed = false;
    for c in cells {
        let label: Vec<String> = c.label.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match &c.summary {
            Ok(s) => {
                failed |= !s.failures.is_empty();
                println!("{}: mean_final_gap {:.6e} (se {:.2e})", label.join(" "), s.mean_final_gap, s.se_final_gap);
            }
            Err(e) => {
                failed = true;
                println!("{}: failed: {e}", label.join(" "));
            }
        }
    }
    if failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg)?;
            print!("{}", summary.to_text());
            Ok(if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::Sweep { config, grid } => {
            let cfg = ExperimentConfig::load(&config)?;
            Ok(print_cells(&sweep(&cfg, &grid)?))
        }
        Command::Compare { config, optimizers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kinds = optimizers.iter().map(|s| s.parse()).collect::<Result<Vec<OptimizerKind>, _>>()?;
            Ok(print_cells(&compare(&cfg, &kinds)?))
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
