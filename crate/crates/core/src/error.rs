use thiserror::Error;

/// Errors raised by the simulator and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error(
        "level collision: tracked state '{label}' has maximum overlap {overlap:.3} below threshold"
    )]
    LevelCollision { label: String, overlap: f64 },

    #[error("near-resonant TLS: |detuning| = {detuning:.4e} rad/s below {threshold:.4e} rad/s")]
    Resonance { detuning: f64, threshold: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("optimum at scan boundary: {0}")]
    BoundaryOptimum(String),

    #[error("calibration missing: {0}")]
    Uncalibrated(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
