use std::process::ExitCode;

use clap::Parser;
use pseudopost::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    match cli::execute(&args) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
