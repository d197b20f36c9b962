//! Binary entry point for the experiment CLI.

mod cli;

fn main() {
    std::process::exit(cli::run());
}
