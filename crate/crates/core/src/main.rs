use std::process::ExitCode;

use glasslocal::cli::run_from_args;
use glasslocal::Error;

fn main() -> ExitCode {
    match run_from_args(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
