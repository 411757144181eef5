use std::io;

use thiserror::Error;
use vspc_core::diagnostics::DiagnosticsError;
use vspc_core::exact::ExactError;
use vspc_core::flowmap::FlowmapError;
use vspc_core::snapshot::SnapshotError;
use vspc_core::{FieldError, SolverError};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const BLOWUP: u8 = 2;
    pub const CHECK_FAILED: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Flowmap(#[from] FlowmapError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(SolverError::Blowup { .. }) => exit::BLOWUP,
            _ => exit::USAGE,
        }
    }
}
