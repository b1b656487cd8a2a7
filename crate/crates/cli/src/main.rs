use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use mtscale::cli::Cli;
use mtscale::{commands, exit};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(printed) => {
            eprint!("{}", printed.stderr);
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(printed.stdout.as_bytes()).is_err() {
                return ExitCode::from(exit::INTERNAL);
            }
            ExitCode::from(exit::OK)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::classify(&err))
        }
    }
}
