use thiserror::Error;

/// Errors produced by kernel construction, solvers, and data ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical singularity: {0}")]
    NumericalSingularity(String),

    #[error("csv error in {path}: {detail}")]
    Csv { path: String, detail: String },

    #[error("model document error: {0}")]
    ModelDoc(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for usage/input problems, 3 for
    /// numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalSingularity(_) => 3,
            _ => 2,
        }
    }
}
