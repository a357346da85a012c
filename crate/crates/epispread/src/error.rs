//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or precondition check failed; the message names the field.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation referenced an individual not present in the structure.
    #[error("unknown individual {0}")]
    UnknownPerson(u32),

    /// An individual with no visits cannot form a trajectory.
    #[error("empty visit list for individual {0}")]
    EmptyVisits(u32),

    /// Series with different evaluation timestamps cannot be compared.
    #[error("timestamp grids do not match")]
    TimestampMismatch,

    /// Exact enumeration refused: 2^(nodes + contacts) exceeds the guard.
    #[error("instance too large for exact enumeration: {nodes} nodes + {contacts} contacts")]
    InstanceTooLarge { nodes: usize, contacts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
