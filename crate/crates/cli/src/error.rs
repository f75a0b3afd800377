use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing reserved column `{0}`")]
    MissingReservedColumn(String),

    #[error("line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    ParseError {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("both `.log_lik` and `.log_lik.N` columns are present")]
    MixedLikColumns,

    #[error("no parameters match {0}")]
    EmptySelection(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid oracle specification `{spec}`: {reason}")]
    InvalidOracle { spec: String, reason: String },

    #[error("could not start evaluator `{command}`: {reason}")]
    SpawnFailure { command: String, reason: String },

    #[error("evaluator protocol violation on reply line {line}: {detail}")]
    ProtocolViolation { line: usize, detail: String },

    #[error("evaluator did not reply within {0:?}")]
    Timeout(Duration),

    #[error(transparent)]
    Core(#[from] powerscale_core::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, column: Option<usize>, message: impl Into<String>) -> Self {
        CliError::ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
