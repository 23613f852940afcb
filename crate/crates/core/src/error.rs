use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integration step too large: {reason} (try dt <= {suggested_dt:.3e} us)")]
    StepTooLarge { reason: String, suggested_dt: f64 },

    #[error("steady state is not unique (null space dimension {0})")]
    NonUniqueSteadyState(usize),

    #[error("record is not aligned with the comb period: {0}")]
    Misaligned(String),

    #[error("input is undersampled: Nyquist {nyquist:.1} rad/us below signal band {band:.1} rad/us")]
    Aliasing { nyquist: f64, band: f64 },

    #[error("gram matrix is numerically zero; refusing to invert")]
    SingularGram,

    #[error("not enough samples: {0}")]
    InsufficientSamples(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("monte carlo estimate did not reach tolerance {tolerance:.2e} (stderr {stderr:.2e} after {samples} samples)")]
    MonteCarloTolerance { tolerance: f64, stderr: f64, samples: usize },

    #[error("io error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Format(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
