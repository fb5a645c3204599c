use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use parvi::runner::{load_config, run_experiment, RunStatus};
use parvi::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_BLOWUP: u8 = 3;

#[derive(Parser)]
#[command(
    name = "parvi",
    version,
    about = "Particle-based variational inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run every config matching a glob pattern, in parallel.
    Sweep { pattern: String },
    /// Check a config and print it with defaults applied.
    Validate { config: PathBuf },
}

fn run_one(path: &Path) -> u8 {
    let cfg = match load_config(path) {
        Ok(cfg) => cfg,
        Err(e @ Error::Validation(_)) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_VALIDATION;
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_FAILURE;
        }
    };
    match run_experiment(&cfg) {
        Ok(out) => match out.status {
            RunStatus::Completed => {
                let last = out.metrics.last();
                println!(
                    "{}: completed {} iterations, h = {:.6e}, output in {}",
                    path.display(),
                    cfg.n_iterations,
                    last.map_or(f64::NAN, |r| r.h),
                    cfg.output_dir.display()
                );
                0
            }
            RunStatus::BlowUp { iteration, message } => {
                eprintln!(
                    "{}: numeric blow-up after {iteration} iterations: {message}",
                    path.display()
                );
                EXIT_BLOWUP
            }
        },
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            EXIT_FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_one(&config),
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                print!("{}", cfg.render());
                0
            }
            Err(e @ Error::Validation(_)) => {
                eprintln!("{e}");
                EXIT_VALIDATION
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_FAILURE
            }
        },
        Command::Sweep { pattern } => {
            let paths: Vec<PathBuf> = match glob::glob(&pattern) {
                Ok(paths) => paths.filter_map(|p| p.ok()).collect(),
                Err(e) => {
                    eprintln!("bad pattern '{pattern}': {e}");
                    return ExitCode::from(EXIT_FAILURE);
                }
            };
            if paths.is_empty() {
                eprintln!("no configs match '{pattern}'");
                EXIT_FAILURE
            } else {
                paths
                    .par_iter()
                    .map(|p| run_one(p))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .max()
                    .unwrap_or(0)
            }
        }
    };
    ExitCode::from(code)
}
