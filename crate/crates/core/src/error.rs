use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state} has zero row marginal")]
    ZeroRowMarginal { state: usize },

    #[error("linear system is singular or ill-conditioned")]
    SingularSystem,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dual point outside the domain at row {row}")]
    DomainViolation { row: usize },

    #[error("degenerate dual box at row {row}")]
    DegenerateBox { row: usize },

    #[error("problem too large: {size} exceeds the limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("no feasible point")]
    NoFeasiblePoint,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroRowMarginal { .. } => "zero_row_marginal",
            Error::SingularSystem => "singular_system",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::DomainViolation { .. } => "domain_violation",
            Error::DegenerateBox { .. } => "degenerate_box",
            Error::TooLarge { .. } => "too_large",
            Error::NoFeasiblePoint => "no_feasible_point",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
