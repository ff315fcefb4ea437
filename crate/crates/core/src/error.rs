use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("action pair ({0}, {1}) is not a pure Nash equilibrium")]
    NotPureNash(usize, usize),
    #[error("index {index} out of range for {len} actions")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("inconsistent records: {0}")]
    Records(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
