use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A QR factorization hit a (numerically) dependent column.
    #[error("matrix is rank deficient: column {column} has residual norm {residual:e} (column norm {norm:e})")]
    RankDeficient {
        column: usize,
        residual: f64,
        norm: f64,
    },

    #[error("unsupported constellation order {0} (expected 4, 16 or 64)")]
    UnsupportedOrder(usize),

    #[error("bit string of length {len} is not a multiple of {bits_per_symbol} bits per symbol")]
    LengthMismatch { len: usize, bits_per_symbol: usize },

    #[error("unknown code `{0}` (expected `proposed` or `djabba`)")]
    UnknownCode(String),

    #[error("unknown decoder `{0}` (expected `exhaustive`, `sphere`, `fast` or `fast-any`)")]
    UnknownDecoder(String),

    /// A search would exceed its configured candidate budget.
    #[error("{what} needs {needed} candidates which exceeds the budget of {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    /// The R factor does not have the sparsity the fast decoder relies on.
    #[error("R factor violates the conditional-decoding structure at ({row}, {col}): relative magnitude {magnitude:e}")]
    StructureViolation {
        row: usize,
        col: usize,
        magnitude: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
