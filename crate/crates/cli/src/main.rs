//! `scorerule`: fit models by minimum scoring rule, test hypotheses with
//! sandwich-calibrated statistics, and run coverage experiments.
//!
//! Data files are CSV, one observation per row, no header required (a
//! non-numeric first line is skipped, `#` starts a comment). Row width is
//! 1 for the location models, q for the equi-correlated model and p + 1
//! for regression, where the response comes first: `y,x1,..,xp`.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Why a run stopped.
#[derive(Debug)]
pub enum Fail {
    /// Bad flags or inputs; exit code 2.
    Usage { flag: &'static str, msg: String },
    /// The computation itself failed; exit code 1.
    Numeric(scorerule::Error),
}

impl Fail {
    pub fn usage(flag: &'static str, msg: impl std::fmt::Display) -> Self {
        Fail::Usage {
            flag,
            msg: msg.to_string(),
        }
    }
}

impl From<scorerule::Error> for Fail {
    fn from(e: scorerule::Error) -> Self {
        Fail::Numeric(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage { flag, msg }) => {
            eprintln!("error: {flag}: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Numeric(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
