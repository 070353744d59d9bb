use std::path::PathBuf;

/// Errors produced anywhere in the codec, channel, protocol, or harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input vector has zero power and cannot be normalized")]
    ZeroPower,

    #[error("channel outage: |h| = {magnitude:e} is below the equalization floor")]
    Outage { magnitude: f64 },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("session complete: all {0} blocks have been transmitted")]
    SessionComplete(usize),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint is incompatible with the requested run: {0}")]
    Incompatible(String),

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss {
        loss: f64,
        epoch: usize,
        step: usize,
        diagnostic: Option<PathBuf>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
