use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A filter-bank or transform specification violates its invariants.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    /// Inputs are individually valid but do not fit together (sample rates, shapes, hops).
    #[error("config error: {0}")]
    Config(String),
    /// Input data is unusable (non-finite samples, empty signals).
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    /// The optimizer could not make progress.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSpec(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::UnsupportedFormat(_) | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
