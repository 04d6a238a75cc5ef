use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A shape, width or configuration value is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-provided data violates a precondition (missing modality, zero-area box, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A file was readable but its contents are malformed.
    #[error("format error in {context} at byte {offset}: {message}")]
    Format {
        context: String,
        offset: u64,
        message: String,
    },

    /// A line-oriented text file has a bad record.
    #[error("parse error in {context}, record {record}: {message}")]
    Parse {
        context: String,
        record: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An operation produced or received NaN/Inf.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Batch statistics are undefined (one element per channel).
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// Training loss exceeded the divergence bound; parameters were restored to the last good step.
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },

    /// Synthetic scene could not be placed within the retry budget.
    #[error("generation error: {0}")]
    Generation(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
