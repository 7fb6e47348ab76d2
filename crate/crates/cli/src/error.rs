use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] seatrack_core::Error),
    #[error(transparent)]
    Annotate(#[from] seatrack_annotate::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        let input = match self {
            Error::Usage(_) => true,
            Error::Core(e) => e.is_input_error(),
            Error::Annotate(seatrack_annotate::Error::Core(e)) => e.is_input_error(),
            Error::Annotate(seatrack_annotate::Error::BadRequest(_)) => true,
            Error::Annotate(_) => false,
        };
        if input {
            1
        } else {
            2
        }
    }
}
