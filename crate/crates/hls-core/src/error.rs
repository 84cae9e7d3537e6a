use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// The split matters to callers: configuration/usage mistakes
/// (`InvalidInput`, `DimensionMismatch`, `Config`) are recoverable by fixing
/// the inputs, while the numerical variants (`RankDeficient`, `NonFinite`,
/// `NonConvergence`, `Numerical`) signal that a computation failed on
/// legitimate-looking inputs and usually warrant a retry with fresh
/// randomness or a different tolerance.
#[derive(Debug, Error)]
pub enum HlsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HlsError {
    /// True when the error stems from caller-supplied configuration or
    /// environment (bad values, mismatched shapes, unreadable paths) rather
    /// than a numerical breakdown. The CLI maps this to exit code 2 and
    /// everything else to exit code 3.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HlsError::InvalidInput(_)
                | HlsError::DimensionMismatch(_)
                | HlsError::Config(_)
                | HlsError::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, HlsError>;
