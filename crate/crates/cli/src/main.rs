mod args;
mod commands;
mod io;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

pub const EXIT_ALERT: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;
pub const EXIT_IO: u8 = 74;

/// Bad input data that does not come from the library.
#[derive(Debug)]
pub struct DataError(pub String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

pub enum Outcome {
    Clean,
    Alert,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<loop_sentinel::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_DATA };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => commands::gen(a, seed),
        Command::Train(a) => commands::train(a, seed),
        Command::Calibrate(a) => commands::calibrate(a, seed),
        Command::Monitor(a) => commands::monitor(a),
        Command::Eval(a) => commands::eval(a, seed),
        Command::Graph(a) => commands::graph(a, seed),
        Command::Stats(a) => commands::stats(a),
        Command::Plot(a) => commands::plot(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Alert) => ExitCode::from(EXIT_ALERT),
        Err(e) => {
            eprintln!("loop-sentinel: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
