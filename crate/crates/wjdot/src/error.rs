use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input in {context}: {message}")]
    Invalid { context: &'static str, message: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("masses in {context} do not form a probability vector (sum = {sum})")]
    Mass { context: &'static str, sum: f64 },

    #[error("{solver} exceeded its iteration budget ({iterations} iterations, residual {residual:.3e})")]
    IterationBudget {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(context: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            context,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate a malformed configuration or input file
    /// rather than a runtime failure. The CLI maps these to exit code 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. })
    }
}
