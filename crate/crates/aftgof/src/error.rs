use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("solver failed to converge: {0}")]
    NonConvergence(String),

    #[error("model is not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable process exit code: 2 for input problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Csv { .. } | Error::Row { .. } | Error::Io(_) => 2,
            Error::NonConvergence(_) | Error::NonIdentifiable(_) | Error::Numerical(_) => 3,
        }
    }
}
