//! `ate-bw` command-line front end.
//!
//! Flags override values from `--config` (TOML), which override defaults.
//! Exit codes: 0 success, 2 input error, 3 numerical or degeneracy error,
//! 4 configuration error.

mod commands;
mod config;
mod input;
mod output;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

use crate::error::Error;

pub use config::{Cli, Command, GridSpec, RunConfig};
pub use input::read_dataset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Config(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e.root() {
                Error::InvalidInput(_) => EXIT_INPUT,
                Error::InvalidBandwidth(_) | Error::Unknown { .. } | Error::MissingInput { .. } => EXIT_CONFIG,
                _ => EXIT_NUMERIC,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let outcome = RunConfig::resolve(&cli).and_then(|cfg| commands::execute(&cfg));
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("ate-bw: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
