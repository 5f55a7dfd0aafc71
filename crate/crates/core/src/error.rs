use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum FreezeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chain of length {len} exceeds the dense-representation cap of {cap} sites")]
    DimensionOverflow { len: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Hermitian eigendecomposition broke down: {0}")]
    Eigen(String),

    #[error("step size {dt} violates the integrator rule: {reason}")]
    StepSize { dt: f64, reason: String },

    #[error("empty series")]
    EmptySeries,

    #[error("unsupported chain length {0} for mode quantization (only L = 3 is available)")]
    UnsupportedLength(usize),

    #[error("quadrature grid of {0} points is too coarse (need at least 64)")]
    InsufficientGrid(usize),

    #[error("empty frequency range ({lo}, {hi})")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("sweep failed at omega = {omega}: {source}")]
    SweepPoint {
        omega: f64,
        #[source]
        source: Box<FreezeError>,
    },

    #[error("series too short for a fit: {len} points (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },

    #[error("{path}: line {line}: {message}")]
    Table {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FreezeError>;
