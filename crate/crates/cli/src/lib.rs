//! Command-line front end for `ako-core`.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 I/O error, 4 pipeline
//! failure.

pub mod args;
pub mod commands;
pub mod matrix_io;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::{Cli, Command};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Io(_) => 3,
            CliError::Pipeline(_) => 4,
        }
    }
}

impl From<ako_core::Error> for CliError {
    fn from(e: ako_core::Error) -> Self {
        use ako_core::Error as E;
        match e {
            E::Config(_) => CliError::Usage(e.to_string()),
            E::Pipeline(_) | E::Construction(_) => CliError::Pipeline(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when
/// `threads` is `None`.
pub fn with_threads<R: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> R + Send,
) -> Result<R, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Pipeline(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Parses `argv` and runs the command, writing diagnostics to `stderr`.
/// Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 2;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Infer(a) => commands::infer(&a, stdout),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::Version => writeln!(stdout, "ako {VERSION}")
            .map_err(|e| CliError::Io(e.to_string())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
