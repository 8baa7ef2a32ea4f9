use std::process::ExitCode;

use clap::Parser;
use qcbm_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match qcbm_cli::run(&cli) {
        Ok(files) => {
            for f in files {
                qcbm_cli::output::say(format!("wrote {}", f.display()));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
