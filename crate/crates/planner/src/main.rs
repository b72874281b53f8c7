use std::process::ExitCode;

use clap::Parser;
use dap_planner::cli::Cli;
use dap_planner::Exit;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exit = match dap_planner::run(&cli) {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("error: {e:#}");
            Exit::for_error(&e)
        }
    };
    ExitCode::from(exit as u8)
}
