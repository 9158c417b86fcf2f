use thiserror::Error;

/// Errors raised by the identification library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resolvent zI - A is singular at z = {z} (condition estimate {condition:e})")]
    SingularResolvent { z: String, condition: f64 },

    #[error("Markov sequence too short: {available} coefficients available, {required} required")]
    InsufficientDepth { available: usize, required: usize },

    #[error("external output map S does not have full column rank (rank {rank}, columns {cols})")]
    RankDeficientS { rank: usize, cols: usize },

    #[error("network is not a homogeneous SISO network: {0}")]
    NotHomogeneousSiso(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("Hankel depth {depth} exceeds signal length {length}")]
    DepthExceedsLength { depth: usize, length: usize },

    #[error("input is not persistently exciting of order {order}")]
    NotPersistentlyExciting { order: usize },

    #[error("could not generate a persistently exciting input after {attempts} attempts")]
    ExcitationFailure { attempts: usize },

    #[error("least-squares residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("Markov order r = {r} is below the required 2n - 1 = {required}")]
    InsufficientOrder { r: usize, required: usize },

    #[error("vectorized system has {unknowns} unknowns, above the limit {limit}; use the blockwise solver")]
    ProblemTooLarge { unknowns: usize, limit: usize },

    #[error("topology partitions differ: {0}")]
    PartitionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Whether the error comes from a numerical failure (rank, residual,
    /// excitation) rather than from malformed input.
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            Error::SingularResolvent { .. }
                | Error::RankDeficientS { .. }
                | Error::NotPersistentlyExciting { .. }
                | Error::ExcitationFailure { .. }
                | Error::ResidualTooLarge { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
