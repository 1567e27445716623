use thiserror::Error;

/// Errors raised by the spectral laboratory.
#[derive(Debug, Error)]
pub enum NskqError {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    /// An exponential weight `e^{w}` left the representable range.
    #[error("exponential weight saturated (exponent {exponent:.3e} at |xi| = {xi_mag:.3e})")]
    Saturation { exponent: f64, xi_mag: f64 },

    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("integrator stability failure: {0}")]
    Stability(String),

    #[error("unknown initial-data generator `{0}`")]
    UnknownGenerator(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NskqError>;
