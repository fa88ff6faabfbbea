use std::io;

use thiserror::Error;

/// Errors raised anywhere in the adaptation pipeline.
///
/// The variants are coarse on purpose: the CLI maps each family onto a
/// distinct exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(what: &str, a: (usize, usize), b: (usize, usize)) -> Self {
        Error::Dimension(format!(
            "{what}: incompatible shapes {}x{} and {}x{}",
            a.0, a.1, b.0, b.1
        ))
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
