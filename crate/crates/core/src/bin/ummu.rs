use std::process::ExitCode;

use clap::Parser;
use ummu_core::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ummu: {e}");
            ExitCode::FAILURE
        }
    }
}
