//! Command-line front end: streaming detection, the machine-temperature
//! experiment and the Monte Carlo studies.

pub mod args;
mod error;
pub mod input;
pub mod nab;
pub mod simulate;
pub mod stream;

use std::fs::File;
use std::io::{self, BufReader, Write};

pub use error::CliError;

use args::{Cli, Command};

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    let (stdout, stderr) = (io::stdout(), io::stderr());
    let (mut out, mut log) = (stdout.lock(), stderr.lock());
    let result = match &cli.command {
        Command::Stream(a) => match a.input.as_deref() {
            Some(p) if p.as_os_str() != "-" => match File::open(p) {
                Ok(f) => stream::cmd_stream(a, BufReader::new(f), &mut out, &mut log).map(|_| 0),
                Err(source) => Err(CliError::Missing {
                    path: p.to_path_buf(),
                    source,
                }),
            },
            _ => stream::cmd_stream(a, io::stdin().lock(), &mut out, &mut log).map(|_| 0),
        },
        Command::Nab(a) => nab::cmd_nab(a, &mut out, &mut log),
        Command::Simulate(a) => simulate::cmd_simulate(a, &mut out, &mut log).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            let _ = writeln!(log, "error: {e}");
            e.exit_code()
        }
    }
}
