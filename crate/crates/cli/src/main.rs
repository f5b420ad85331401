//! `odeid` command-line interface.

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod manifest;

use args::{Cli, Command};
use manifest::RunManifest;

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => f.write_str(m),
        }
    }
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ODEID_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("ODEID_WORKERS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Run(e.to_string()))
}

fn resolve(cmd: &Command) -> Result<RunManifest, CliError> {
    match cmd {
        Command::Simulate(a) => RunManifest::simulate(a),
        Command::Discover(a) => RunManifest::discover(a),
        Command::Benchmark(a) => RunManifest::benchmark(a),
        Command::Report(a) => RunManifest::report(a),
        Command::Rerun(a) => {
            let mut m = RunManifest::load(&a.manifest)?;
            if let Some(out) = &a.out {
                m.set_out(out.clone());
            }
            Ok(m)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    let manifest = resolve(&cli.command)?;
    commands::execute(&manifest)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
