use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("inadmissible configuration: {0}")]
    Inadmissible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from the problem data rather than from a run.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Hypothesis(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
