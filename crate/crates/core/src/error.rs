use thiserror::Error;

use crate::operators::expr::{EvalError, ParseError};

/// Errors surfaced by the library.
///
/// The CLI maps [`Error::NonConvergence`] to exit code 1 and every other
/// variant to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("coefficient parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("coefficient evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("singular linear system at row {0}")]
    Singular(usize),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
