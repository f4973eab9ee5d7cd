use thiserror::Error;

/// Errors raised by the model, estimation and inversion routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    #[error("log_sum_exp of an empty sequence")]
    EmptyInput,

    /// The truncation point needed to reach the requested accuracy exceeds the cap.
    #[error("truncation point {needed} exceeds the configured cap of {cap}")]
    Resource { needed: u64, cap: u64 },

    /// Numerical inversion cannot reach the required accuracy with this grid.
    #[error("tail mass {tail:.3e} beyond {support} support points exceeds {limit:e}")]
    Accuracy { tail: f64, support: usize, limit: f64 },

    #[error("invalid time series: {0}")]
    Series(String),

    /// Malformed input file; `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Parse { line, message: e.to_string() },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
