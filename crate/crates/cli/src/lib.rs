//! Configuration, orchestration and artifacts for the `nfield` tool.

pub mod build;
pub mod config;
pub mod io;
pub mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Stochastic neural field laboratory.
#[derive(Debug, Parser)]
#[command(name = "nfield", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs the experiment and writes artifacts plus a manifest.
    Run { config: PathBuf },
    /// Checks the configuration without simulating.
    Validate { config: PathBuf },
}

pub const EXIT_CERTIFICATE_FAILED: u8 = 2;

pub fn main_with(cli: Cli) -> ExitCode {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let over = run::Overrides {
        seed: cli.seed,
        output_dir: cli.output_dir,
    };
    let result = match &cli.command {
        Command::Run { config } => run::run(config, &over).map(|s| match s {
            run::Status::Ok => ExitCode::SUCCESS,
            run::Status::CertificateFailed => {
                eprintln!("certificate failed");
                ExitCode::from(EXIT_CERTIFICATE_FAILED)
            }
        }),
        Command::Validate { config } => run::validate(config, &over).map(|report| {
            println!("{report}");
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
