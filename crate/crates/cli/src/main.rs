use std::process::ExitCode;

use cascade_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.warnings.is_empty() {
                ExitCode::SUCCESS
            } else {
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
