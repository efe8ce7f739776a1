use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncated frame: header declares {needed} bits but only {available} are available")]
    TruncatedFrame { needed: usize, available: usize },

    #[error("unsupported frame version {0:#x}")]
    UnsupportedVersion(u8),

    #[error("malformed hex frame line: {0}")]
    MalformedHex(String),

    #[error("threshold calibration failed: no grid threshold reaches false-alarm rate {target}")]
    CalibrationFailure { target: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("parameter `{key}` out of domain: {reason}")]
    OutOfDomain { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
