use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("numeric error: non-finite gradient in tensor `{tensor}`")]
    Numeric { tensor: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("build error: {0}")]
    Build(String),

    #[error("surgery error: expected {expected}, got {got}")]
    Surgery { expected: String, got: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Validation(_)
            | Error::Split(_)
            | Error::Build(_)
            | Error::Batch(_)
            | Error::Label(_)
            | Error::Evaluation(_) => 2,
            Error::Divergence { .. } | Error::Numeric { .. } => 3,
            Error::Io(_) | Error::Format(_) | Error::Length { .. } | Error::Shape(_) => 4,
            Error::Surgery { .. } => 5,
            Error::Dimension(_) | Error::Contract(_) => 6,
        }
    }
}
