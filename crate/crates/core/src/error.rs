use thiserror::Error;

/// Errors raised by path, potential, transform and estimator operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("out of range: {0}")]
    Range(String),

    /// A dead (killed) path was read at or beyond its lifetime index.
    #[error("path is dead from index {lifetime} (t = {time}), requested index {requested}")]
    Lifetime {
        lifetime: usize,
        time: f64,
        requested: usize,
    },

    #[error("exponent overflow at t = {time}: |exponent| = {exponent:e} exceeds {limit}")]
    Overflow {
        time: f64,
        exponent: f64,
        limit: f64,
    },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("fixed-point iteration did not converge on [{start}, {end}] after {iterations} iterations (last step {last_step:e})")]
    Convergence {
        start: f64,
        end: f64,
        iterations: usize,
        last_step: f64,
        diagnostics: Box<crate::transform::SolveDiagnostics>,
    },

    #[error("projection error: {0}")]
    Projection(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
