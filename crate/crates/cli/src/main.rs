//! `spikebench` command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid arguments or inputs, 2 I/O and file
//! format errors, 3 numerical failures.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use spikebench::Error;

const THREADS_ENV: &str = "SPIKEBENCH_THREADS";

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io(_) | Error::Load { .. } | Error::Format(_) | Error::Json(_) | Error::Csv(_) => 2,
        Error::Numerical(_) => 3,
        _ => 1,
    }
}

/// `--workers` wins over `SPIKEBENCH_THREADS`; with neither, rayon's global
/// pool uses every core.
fn workers(flag: Option<usize>) -> Result<Option<usize>, Error> {
    let n = match (flag, std::env::var(THREADS_ENV)) {
        (Some(n), _) => Some(n),
        (None, Ok(v)) if !v.trim().is_empty() => Some(
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a worker count")))?,
        ),
        _ => None,
    };
    if n == Some(0) {
        return Err(Error::InvalidArgument("worker count must be >= 1".into()));
    }
    Ok(n)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let run = || -> Result<String, Error> {
        let w = workers(cli.workers)?;
        match &cli.command {
            Command::Simulate(a) => commands::simulate(a, w),
            Command::Estimate(a) => commands::estimate(a, w),
            Command::Sweep(a) => commands::sweep(a, w),
            Command::Gen(a) => commands::gen(a),
        }
    };
    match run() {
        Ok(text) => {
            if !text.is_empty() {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
