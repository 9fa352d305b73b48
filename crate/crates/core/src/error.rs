use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("measure has infinite activity; restrict it to a positive truncation level first")]
    InfiniteActivity,
    #[error("quadrature did not converge: relative change {change:e} after {nodes} nodes")]
    Quadrature { change: f64, nodes: usize },
    #[error(
        "boundary mass fraction {fraction:e} exceeds threshold {threshold:e} at t = {time}; \
         enlarge the box or shorten the horizon"
    )]
    BoundaryMass {
        time: f64,
        fraction: f64,
        threshold: f64,
    },
    #[error("t = {0} is not a recorded time")]
    NotRecorded(f64),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical_abort(&self) -> bool {
        matches!(
            self,
            Error::BoundaryMass { .. } | Error::InvalidState(_) | Error::Quadrature { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
