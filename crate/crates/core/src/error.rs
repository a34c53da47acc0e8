//! Error taxonomy shared by every module in the crate.
//!
//! Domain and contract errors come out of the trust-attribute math, data and
//! schema errors out of the survey pipeline, and training/model-file errors
//! out of the neural trust model. The CLI maps this taxonomy onto its exit
//! codes, so variants are deliberately coarse but carry enough context to
//! name the offending input.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A mathematical precondition on a trust formula was violated
    /// (value outside its documented range, empty aggregation, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An API contract was violated (mismatched dimensions, unknown
    /// identifiers, out-of-order timestamps, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// A record was structurally readable but semantically unusable.
    #[error("data error: {0}")]
    Data(String),

    /// An input file does not match the documented schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A survey attribute could not be encoded into a model feature.
    #[error("encoding error for attribute `{attribute}`: {reason}")]
    Encoding { attribute: String, reason: String },

    /// Dataset augmentation could not proceed for a trust level.
    #[error("augmentation error for level `{level}`: {reason}")]
    Augmentation { level: String, reason: String },

    /// Training diverged or produced a non-finite cost.
    #[error("training failure at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    /// A persisted model file could not be read back.
    #[error("model file error: {0}")]
    ModelFile(String),

    /// Reliability was requested for a service with no recorded consumers.
    #[error("no observers: {0}")]
    NoObservers(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV (de)serialization failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for [`Error::Domain`].
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Convenience constructor for [`Error::Contract`].
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Convenience constructor for [`Error::Data`].
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Convenience constructor for [`Error::Schema`].
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// Convenience constructor for [`Error::Encoding`].
    pub fn encoding(attribute: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Encoding {
            attribute: attribute.into(),
            reason: reason.into(),
        }
    }
}
