mod args;
mod commands;
mod manifest;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    let ctx = commands::RunContext { quiet: cli.quiet };
    if let Err(e) = commands::run(&cli.command, &cli.out, &ctx) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
