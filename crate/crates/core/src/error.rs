use thiserror::Error;

/// Errors raised by the estimation and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate position: |p| = {norm} m")]
    DegeneratePosition { norm: f64 },

    #[error("zero range between receiver and satellite")]
    ZeroRange,

    #[error("non-positive measurement sigma {sigma} at index {index}")]
    NonPositiveSigma { index: usize, sigma: f64 },

    #[error("time interval must be positive, got {0}")]
    InvalidInterval(f64),

    #[error("singular covariance")]
    SingularCovariance,

    #[error("singular information")]
    SingularInformation,

    #[error("instance too large: {count} measurements exceeds exhaustive limit {limit}")]
    InstanceTooLarge { count: usize, limit: usize },

    #[error("empty sky at t = {t} s")]
    EmptySky { t: f64 },

    #[error("empty segment: {0}")]
    EmptySegment(String),

    #[error("misaligned epochs: {0}")]
    MisalignedEpochs(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
