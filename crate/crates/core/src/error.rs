use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("flux {phi} out of range: cos(pi*phi) must be positive")]
    FluxOutOfRange { phi: f64 },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("gate requires a calibrated pulse (missing {0})")]
    MissingCalibration(&'static str),

    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),

    #[error("no A_CDD candidate: {0}")]
    NoCandidate(String),

    #[error("calibration failed: {reason}")]
    CalibrationFailed { reason: String, log: Vec<String> },

    #[error("fit failed: {reason} (rms residual {residual:.3e})")]
    Fit { reason: String, residual: f64 },

    #[error("clifford table integrity: {0}")]
    TableIntegrity(String),

    /// Raw per-sequence survivals are kept so a failed fit can be inspected.
    #[error("benchmark failed: {reason}")]
    Benchmark {
        reason: String,
        lengths: Vec<usize>,
        survival: Vec<Vec<f64>>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
