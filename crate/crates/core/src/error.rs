use stgat_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration value. `key` is the dotted config path when known.
    #[error("config error: {key}: {msg}")]
    Config { key: String, msg: String },

    /// Malformed input file, with the 1-based line (or frame) it refers to.
    #[error("parse error at {location}: {msg}")]
    Parse { location: String, msg: String },

    /// Well-formed input that cannot be used (empty sequence, wrong joint count, ...).
    #[error("data error: {0}")]
    Data(String),

    /// NaN/inf during training or a failed gradient check.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn parse_line(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            msg: msg.into(),
        }
    }

    pub fn parse_frame(frame: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("frame {frame}"),
            msg: msg.into(),
        }
    }

    /// Short machine-readable class name, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Numeric(_) => "numeric",
            Error::Tensor(TensorError::NonFinite { .. }) => "numeric",
            Error::Tensor(_) => "tensor",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 config, 3 data (including parse and io), 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
            Error::Tensor(TensorError::NonFinite { .. }) => 4,
            Error::Tensor(TensorError::Checkpoint(_)) => 3,
            Error::Tensor(TensorError::Io(_)) => 3,
            Error::Tensor(_) => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
