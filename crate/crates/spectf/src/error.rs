use thiserror::Error;

/// Crate-wide error type.
///
/// The variants are grouped by how a caller should react: `Dimension` and
/// `InvalidInput` are programming or configuration mistakes, `Data` is a
/// validation failure of user-supplied files (carrying row/column context),
/// and `Numerical` covers factorization failures and diverging iterations.
#[derive(Error, Debug)]
pub enum SpectfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("data validation failed: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SpectfError>;

impl SpectfError {
    /// Process exit code for the CLI: 2 for data validation problems,
    /// 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SpectfError::Data(_) | SpectfError::Csv(_) => 2,
            SpectfError::Numerical(_) | SpectfError::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}
