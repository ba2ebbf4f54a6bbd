mod cli;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use config::FileConfig;
use error::CliError;

/// Sizes the global rayon pool from `WNB_THREADS`, if set.
fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("WNB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "WNB_THREADS must be a positive integer, got '{value}'"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Train(a) => commands::train(a, &file),
        Command::Predict(a) => commands::predict(a, &file),
        Command::Evaluate(a) => commands::evaluate(a, &file),
        Command::Benchmark(a) => commands::benchmark(a, &file, false),
        Command::Sweep(a) => commands::benchmark(a, &file, true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed reader such as `| head` is not a failure
        Err(CliError::Output { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
