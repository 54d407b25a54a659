use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] io::Error),

    /// Too many malformed lines, or a structurally invalid file.
    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("score error: {0}")]
    Score(String),

    #[error("classification error: {0}")]
    Classification(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("translator error: {0}")]
    Translate(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
