use thiserror::Error;

/// Errors produced by the library surface.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A size limit (enumeration cutoff, overflow guard) was exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// An experiment configuration failed validation.
    #[error("invalid config: {0}")]
    Config(String),
    /// Sentence generation aborted (for example the derivation depth guard).
    #[error("generation failed: {0}")]
    Generation(String),
    /// Inconsistent vector/matrix shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Malformed serialized data.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable numeric code, also exposed through the C ABI.
    pub fn code(&self) -> i32 {
        match self {
            Error::Argument(_) => 1,
            Error::Capacity(_) => 2,
            Error::Config(_) => 3,
            Error::Generation(_) => 4,
            Error::Shape(_) => 5,
            Error::Parse(_) => 6,
            Error::Io(_) => 7,
        }
    }
}
