use thiserror::Error;

/// Errors raised by the spectral and convolution routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A structural precondition on kernel or signal sizes (k <= n, n mod s = 0, ...).
    #[error("dimension violation: {0}")]
    Dimension(String),

    #[error("rank out of bounds: {0}")]
    Rank(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input for which the requested transform is undefined, e.g. normalizing a zero kernel.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("operator too large for dense construction: {columns} columns exceeds cap {cap}")]
    TooLarge { columns: usize, cap: usize },

    #[error("SVD did not converge: {0}")]
    Svd(String),

    #[error("reconstructed kernel has imaginary residue {residue:e} (limit {limit:e})")]
    ImaginaryResidue { residue: f64, limit: f64 },

    #[error("malformed kernel file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
