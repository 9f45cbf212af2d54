use thiserror::Error;

use crate::model::ConfigViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system configuration: {}", join(.0))]
    InvalidConfig(Vec<ConfigViolation>),

    #[error("{0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("queue {queue} has positive load but belongs to no schedule")]
    Uncovered { queue: usize },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("server is in the wrong mode for {0}")]
    WrongMode(&'static str),

    #[error("{0} is undefined: no completed jobs in the measurement window")]
    Undefined(&'static str),

    #[error("{0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(v: &[ConfigViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
