use std::process::ExitCode;

use clap::Parser;
use noisy_formation_cli::app::{run, Cli};

fn main() -> ExitCode {
    match run(&Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err((code, body)) => {
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
