use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or configuration parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A special function overflowed the floating-point range.
    #[error("overflow: {0}")]
    Overflow(String),

    #[error("correlation matrix factorization failed: {0}")]
    Factorization(String),

    #[error("simulation budget exhausted: {0}")]
    SimulationBudget(String),

    /// An optimizer failed from every start. The diagnostics hold one
    /// line per start.
    #[error("fit failed: {reason}")]
    FitFailure {
        reason: String,
        diagnostics: Vec<String>,
    },

    #[error("margin scale mismatch: expected {expected}, found {found}")]
    Scale { expected: String, found: String },

    #[error("design mismatch: {0}")]
    Design(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The requested computation is too large under the current guards.
    #[error("infeasible: {0}")]
    Feasibility(String),

    #[error("margin transform failed at block {block}, site {site}: {reason}")]
    Transform {
        block: usize,
        site: usize,
        reason: String,
    },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input data or files rather than by
    /// numerical trouble.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Scale { .. }
                | Error::Design(_)
                | Error::Grid(_)
                | Error::Dimension(_)
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Parameter(_)
                | Error::Feasibility(_)
                | Error::Transform { .. }
                | Error::EmptySample(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
