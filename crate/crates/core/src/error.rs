//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no answers selected by the group filter")]
    EmptyGroup,

    #[error("cost matrix cell ({row}, {col}) has no contributing answers")]
    IncompleteCoverage { row: usize, col: usize },

    #[error("invalid matrix size {0}: at least 2 classes are required")]
    InvalidSize(usize),

    #[error("invalid scale factor {0}: must be finite and non-negative")]
    InvalidScale(f64),

    #[error("invalid cost matrix: {0}")]
    InvalidCostMatrix(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("insufficient data: {answers} answers leave {df} degrees of freedom")]
    InsufficientData { answers: usize, df: i64 },

    #[error("within-group variance is zero while groups differ; F is undefined")]
    ZeroWithinVariance,

    #[error("shuffle count must be positive")]
    InvalidShuffleCount,

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("unknown instance {0}")]
    UnknownInstance(u16),

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("instance {0} has no bearing")]
    MissingBearing(String),

    #[error("invalid zone configuration: {0}")]
    InvalidZones(String),

    #[error("{file}: bad magic, expected {expected:?}")]
    MagicMismatch { file: String, expected: String },

    #[error("{file}: truncated at byte offset {offset} (needed {needed} bytes)")]
    TruncatedFile {
        file: String,
        offset: u64,
        needed: u64,
    },

    #[error("{file}: dimension mismatch in {field}: {detail}")]
    DimensionMismatch {
        file: String,
        field: String,
        detail: String,
    },

    #[error("schema violation at {location}, field `{field}`: {reason}")]
    SchemaViolation {
        location: String,
        field: String,
        reason: String,
    },

    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn schema(
        location: impl ToString,
        field: impl ToString,
        reason: impl ToString,
    ) -> Self {
        Error::SchemaViolation {
            location: location.to_string(),
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}
