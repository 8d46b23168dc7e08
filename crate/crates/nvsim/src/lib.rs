//! File formats, scenarios, the parallel shot runner and the command-line
//! front end on top of [`nvsim_core`].

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod formats;
pub mod runner;
pub mod scenarios;

pub use nvsim_core as core;

use std::path::PathBuf;

/// Errors of the front end. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
    #[error("acceptance failed: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Runtime(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<nvsim_core::Error> for CliError {
    fn from(e: nvsim_core::Error) -> Self {
        match e {
            nvsim_core::Error::Config(_) | nvsim_core::Error::Geometry(_) | nvsim_core::Error::DegenerateReadout(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// `x` with 9 significant digits; plain notation for moderate magnitudes.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..9).contains(&e) {
        let s = format!("{:.*}", (8 - e).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}
