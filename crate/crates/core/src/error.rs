use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    /// A first-passage query or a time change ran past the sampled horizon.
    #[error("insufficient horizon: {0}")]
    Horizon(String),

    #[error("sample size {got} below the required minimum {min}")]
    SampleSize { got: usize, min: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("configuration error on key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
