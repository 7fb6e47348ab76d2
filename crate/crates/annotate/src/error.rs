use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] seatrack_core::Error),
    #[error("server: {0}")]
    Server(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
