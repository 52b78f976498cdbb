use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("interval division by an interval containing zero: {0}")]
    DivisionByZeroInterval(String),

    #[error("cannot bisect a box of zero width")]
    DegenerateBox,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty list")]
    EmptyList,

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("undeclared variable `{name}` (line {line})")]
    UndeclaredVariable { name: String, line: usize },

    #[error("duplicate declaration of `{name}` (line {line})")]
    DuplicateDeclaration { name: String, line: usize },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("a priori enclosure failed at substep {substep} after {rounds} rounds")]
    EnclosureFailure { substep: usize, rounds: usize },

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("unresolved name `{0}` in safety specification")]
    UnresolvedName(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// True for failures caused by malformed or inconsistent user input, as
    /// opposed to failures of the analysis itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::EnclosureFailure { .. } | Error::DivisionByZeroInterval(_) | Error::DegenerateBox
        )
    }
}
