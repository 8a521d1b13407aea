use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("matrix must be square for {mode}: got {rows} x {cols}")]
    NotSquare {
        mode: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("kernel underflow at the initial scale sigma0={sigma0}; choose a larger sigma0")]
    InitialUnderflow { sigma0: f64 },

    #[error("sample too large for the exact leave-one-out oracle: N={n} exceeds cap {cap}; use ALP training instead")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("all points are identical; the kernel bandwidth is undefined")]
    ZeroSpread,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
