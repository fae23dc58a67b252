use std::process::ExitCode;

use clap::Parser;
use fscan::cli::{configure_threads, run, Cli, Status};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli, &mut std::io::stdout().lock()));
    match outcome {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
