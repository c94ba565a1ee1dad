use std::process::ExitCode;

use clap::Parser;
use narrator_server::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
