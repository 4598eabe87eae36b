mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, Mode, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "mfopt", version)]
#[command(about = "Selective optimal control of mean-field models with exponential integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimise one preset and write the trajectories and functional trace
    Run(Flags),
    /// Temporal convergence study over a list of step counts
    Converge(Flags),
    /// Compare an uncontrolled agent simulation with the PDE density
    Particles(Flags),
}

fn main() -> ExitCode {
    // clap exits with status 2 on malformed command lines
    let cli = Cli::parse();
    let (flags, mode) = match &cli.command {
        Command::Run(f) => (f, Mode::Run),
        Command::Converge(f) => (f, Mode::Converge),
        Command::Particles(f) => (f, Mode::Particles),
    };
    let outcome = RunConfig::resolve(flags, mode).and_then(|cfg| match mode {
        Mode::Run => commands::run(&cfg),
        Mode::Converge => commands::converge(&cfg),
        Mode::Particles => commands::particles(&cfg),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
