use thiserror::Error;

/// Errors raised by the loading, equilibrium and scenario layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An exit-time map sends later positive mass to an earlier (or the same) exit time.
    #[error("fifo violation: mass entering around t={entry} would exit before mass that entered earlier ({detail})")]
    FifoViolation { entry: f64, detail: String },

    #[error("invalid model parameter: {0}")]
    ModelParameter(String),

    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    /// Loading did not drain the network within the finiteness budget.
    #[error("network loading did not terminate before t={budget} (frontier reached {frontier})")]
    NonTermination { budget: f64, frontier: f64 },

    #[error("relative gap undefined: total demand-weighted travel time is zero")]
    DegenerateDemand,

    #[error("no route serves origin {origin} -> destination {destination}")]
    NoRoute { origin: String, destination: String },

    #[error("instance too large for the reference oracle: {0}")]
    InstanceTooLarge(String),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
