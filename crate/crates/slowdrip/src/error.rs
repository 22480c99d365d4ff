//! Error type shared across the toolkit.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between raw log lines and cluster reports.
#[derive(Debug, Error)]
pub enum Error {
    /// A query name failed structural validation (empty, oversized,
    /// embedded whitespace, empty label, ...).
    #[error("malformed name: {0}")]
    MalformedName(String),

    /// The name equals a public suffix, so no registrable domain exists.
    #[error("no registrable domain under public-suffix rules: {0}")]
    Unregistrable(String),

    /// A record field was out of range or a config value inconsistent.
    #[error("invalid {field}: {reason}")]
    InvalidField { field: String, reason: String },

    /// More than half of the input lines failed to parse.
    #[error("corrupt input {path}: {malformed} of {total} lines malformed")]
    CorruptInput {
        path: String,
        malformed: usize,
        total: usize,
    },

    /// A statistic was requested over too small a sample.
    #[error("insufficient population: need at least {need} values, got {got}")]
    InsufficientPopulation { need: usize, got: usize },

    /// A clustering routine was handed too few vectors.
    #[error("insufficient corpus: need at least {need} vectors, got {got}")]
    InsufficientCorpus { need: usize, got: usize },

    /// A distribution was requested over an empty sample.
    #[error("empty sample: {0}")]
    EmptySample(String),

    /// Archetype selection could not produce a single qualifying cluster.
    #[error("archetype selection failed: {0}")]
    ArchetypeSelection(String),

    /// A dictionary generator ran out of unique combinations.
    #[error("dictionary exhausted: {0}")]
    DictionaryExhausted(String),

    /// Drift assignment was invoked without a usable baseline.
    #[error("missing baseline: {0}")]
    MissingBaseline(String),

    /// Persisted state failed a version or fingerprint check.
    #[error("incompatible state: {0}")]
    IncompatibleState(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidField`].
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for the "not enough data" family of errors, which map to a
    /// distinct process exit code at the CLI boundary.
    pub fn is_insufficient(&self) -> bool {
        matches!(
            self,
            Error::InsufficientPopulation { .. } | Error::InsufficientCorpus { .. }
        )
    }
}
