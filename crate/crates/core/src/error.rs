use thiserror::Error;

/// Errors produced by the sensitivity engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in column `{column}` at draw {row}")]
    NonFiniteValue { row: usize, column: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("at least 2 draws are required, got {0}")]
    TooFewDraws(usize),
    #[error("draws must contain at least one parameter")]
    NoParameters,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weights sum to zero")]
    ZeroWeightSum,
    #[error("invalid weight {0}: weights must be finite and nonnegative")]
    InvalidWeight(f64),
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("invalid alpha {0}: must be finite and positive")]
    InvalidAlpha(f64),
    #[error("invalid alpha grid: {0}")]
    InvalidGrid(String),
    #[error("invalid ECDF: {0}")]
    InvalidEcdf(String),
    #[error("sample covariance is singular")]
    SingularCovariance,
    #[error("degenerate tail: {0}")]
    DegenerateTail(&'static str),
    #[error("ECDFs are not defined on the same support points")]
    GridMismatch,
    #[error("evaluator disagrees with stored densities at draw {row}: {detail}")]
    EvaluatorInconsistent { row: usize, detail: String },
    #[error("evaluator failed at row {row}: {message}")]
    EvaluatorFailure { row: usize, message: String },
    #[error("evaluator error: {0}")]
    EvaluatorBackend(String),
    #[error("weighted covariance could not be factorized")]
    SingularTransform,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid distribution parameters: {0}")]
    InvalidResultingParameters(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
