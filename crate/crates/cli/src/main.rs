mod args;
mod commands;
mod runlog;

use std::process::ExitCode;

use clap::Parser;
use msc_core::ErrorFamily;

use args::{Cli, Command};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MSC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let workers = match &cli.command {
        Command::Synth(a) => a.common.workers,
        Command::Train(a) => a.common.workers,
        Command::Cluster(a) | Command::Tag(a) => a.common.workers,
        Command::Summarize(a) => a.common.workers,
        Command::Correlate(a) => a.common.workers,
        Command::Eval(a) => a.common.workers,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_IO);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(e.family()))
        }
    }
}

fn exit_status(family: ErrorFamily) -> u8 {
    match family {
        ErrorFamily::Validation => EXIT_VALIDATION,
        ErrorFamily::Io => EXIT_IO,
        ErrorFamily::Numeric => EXIT_NUMERIC,
    }
}
