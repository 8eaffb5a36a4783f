use thiserror::Error;

/// Errors raised by the walk laboratory.
///
/// The variants split into two families that the CLI maps onto distinct exit
/// codes: configuration problems (bad parameters, malformed specs) and
/// numeric problems (a formula evaluated outside its domain or regime).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate covariance: |D| = {0}")]
    DegenerateCovariance(f64),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("level schedule rejected: M_{level}(v) = 0 for vertex {vertex} at level {parent_level}")]
    ScheduleRejected {
        parent_level: usize,
        vertex: usize,
        level: usize,
    },

    #[error("undefined slope: {0}")]
    UndefinedSlope(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than by
    /// a numeric or regime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Config(_) | Error::Range(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
