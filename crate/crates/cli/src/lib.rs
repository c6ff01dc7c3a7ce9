//! Command-line front end for the `coad` library.
//!
//! `coad gen | scan | frontier | train | eval | verify | mnist-toy`. Exit
//! codes: 0 on success, 1 for usage and input errors, 2 when a constraint or
//! a verification check fails. `COAD_THREADS` caps the worker pool.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod verify;

use std::ffi::OsString;

use clap::Parser;

use crate::commands::{dispatch, Cli};
use crate::error::CliError;

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("COAD_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "COAD_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = init_threads().and_then(|_| dispatch(&cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
