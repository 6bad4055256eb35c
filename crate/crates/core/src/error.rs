use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violates a documented precondition (shape mismatch, out-of-range value, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input is well-formed but carries too little information (e.g. zero spread).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A non-finite value appeared in parameters, activations, or losses.
    #[error("numeric fault: {0}")]
    NumericFault(String),

    /// A configuration field is missing or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// A dataset, manifest, checkpoint, or report could not be parsed or is inconsistent.
    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) => 2,
            Error::Degenerate(_) | Error::Data(_) | Error::Io { .. } => 3,
            Error::NumericFault(_) => 4,
        }
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(format!($($arg)*))
    };
}
pub(crate) use invalid;
