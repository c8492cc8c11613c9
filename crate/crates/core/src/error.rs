use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes or channel counts do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numeric parameter is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input data cannot be processed (nothing to pair, no samples, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Weight container failed validation.
    #[error("weight audit failed for layer `{layer}`: {reason}")]
    WeightAudit { layer: String, reason: String },

    #[error("weight manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
