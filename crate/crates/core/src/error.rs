use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("singular matrix: pivot {pivot:e} below threshold {threshold:e} at column {column}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidInput(_) | Error::Io { .. } => 2,
            Error::Numerical(_)
            | Error::SingularMatrix { .. }
            | Error::NoConvergence { .. }
            | Error::InsufficientData(_) => 3,
        }
    }

    /// Short machine-readable category used on the error line of the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Config { .. } => "config",
            Error::Numerical(_) => "numerical",
            Error::SingularMatrix { .. } => "singular_matrix",
            Error::NoConvergence { .. } => "no_convergence",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Io { .. } => "io",
        }
    }
}
