use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A state left its physical domain during integration.
    #[error("numerical invariant breach at t = {time_ns:.6} ns: {detail}")]
    Invariant { time_ns: f64, detail: String },

    #[error("calibration regime failure: {0}")]
    Calibration(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the `holosim` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parameter(_) | Error::Json(_) => 2,
            Error::Invariant { .. } => 3,
            Error::Calibration(_) => 4,
            Error::Dimension(_) | Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
