use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at update {step}: {what}")]
    Divergence { step: u64, what: String },

    #[error("replay buffer unavailable: {0}")]
    Unavailable(String),

    #[error("episode rejected: {0}")]
    Rejected(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("load error: {0}")]
    Load(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
