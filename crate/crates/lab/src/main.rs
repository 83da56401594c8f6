use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qvp_lab::acceptance::{run_all, SuiteOptions};
use qvp_lab::report::ENGINE_VERSION;
use qvp_lab::runner;

/// Quantum virtual path laboratory.
#[derive(Parser)]
#[command(name = "qvplab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Run the acceptance suite and print one line per criterion.
    Selftest {
        /// Override the relative lobe-position tolerance.
        #[arg(long)]
        position_tol: Option<f64>,
    },
    /// Write the density of a single N from a config.
    EmitDensity {
        config: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Print the engine version.
    Version,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => match runner::run(&config) {
            Ok(outcome) => {
                let report = &outcome.report;
                println!("{} rows, digest {}", report.rows.len(), report.digest);
                if report.pass {
                    println!("PASS");
                    ExitCode::SUCCESS
                } else {
                    for c in report.failed_checks() {
                        eprintln!(
                            "FAIL {} theta={} N={}: {} vs {}",
                            c.name, c.theta, c.n, c.value, c.threshold
                        );
                    }
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Selftest { position_tol } => {
            let mut opts = SuiteOptions::default();
            if let Some(tol) = position_tol {
                opts.position_tol = tol;
            }
            let outcomes = run_all(&opts);
            for o in &outcomes {
                println!("{}", o.line());
            }
            if outcomes.iter().all(|o| o.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::EmitDensity { config, n } => match runner::emit_density(&config, n) {
            Ok(path) => {
                println!("{}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Version => {
            println!("{ENGINE_VERSION}");
            ExitCode::SUCCESS
        }
    }
}
