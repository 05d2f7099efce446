use std::process::ExitCode;

use clap::Parser;
use mfnoise::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for (step, msg) in &report.failures {
                    eprintln!("failed: {step}: {msg}");
                }
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
