use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = vqg_cli::cli::Cli::parse();
    match vqg_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
