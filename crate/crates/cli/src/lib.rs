//! Command-line front end for power-scaling sensitivity analysis: draws
//! file ingestion, reports, plot data and the external evaluator protocol.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod io;
pub mod oracle_spec;
pub mod report;

pub use cli::{run, Cli};
pub use commands::Outcome;
pub use error::{CliError, Result};
