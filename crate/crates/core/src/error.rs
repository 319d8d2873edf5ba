// SPDX-License-Identifier: Apache-2.0

//! Error type shared by every module of the crate.
//!
//! Each variant carries a stable machine-readable code (see [`Error::code`])
//! so that command-line front ends and scripts can match on failures without
//! parsing messages.

use std::path::PathBuf;

use crate::schema::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse failure in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(ValidationReport),

    #[error("unknown entry type or category `{type_name}.{category}`")]
    UnknownTypeOrCategory { type_name: String, category: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("token `{token}` is not in the vocabulary of `{field}`")]
    UnknownToken { field: String, token: String },

    #[error("malformed one-hot vector: {ones} set bits over width {width}")]
    MalformedOneHot { ones: usize, width: usize },

    #[error("contrast coding needs at least 2 levels, got {0}")]
    KTooSmall(usize),

    #[error("level index {index} out of range for {k} levels")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("bounds out of order: min {min} must be below max {max}")]
    BoundsOrder { min: f64, max: f64 },

    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("scale must be positive, got {0}")]
    NonpositiveScale(f64),

    #[error("quantile state holds {0} observations, at least 2 required")]
    InsufficientState(u64),

    #[error("non-finite value {0}")]
    NonfiniteValue(f64),

    #[error("parameter `{param}` uses encoding {encoding}, operation requires minmax")]
    UnsupportedForEncoding { param: String, encoding: String },

    #[error("raw value missing for `{param}` (line {line})")]
    RawValueMissing { param: String, line: usize },

    #[error("raw value {value} of `{param}` lies outside new bounds [{min}, {max}]")]
    ValueOutsideNewBounds {
        param: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("schema fingerprint mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("record fingerprint {found} does not match migration source {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("streams carry different schema fingerprints: {0} vs {1}")]
    FingerprintMix(String, String),

    #[error("arity mismatch for {what}: expected {expected}, got {found}")]
    ArityMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: encoded width {found}, layout demands {expected}")]
    WidthMismatch { line: usize, expected: usize, found: usize },

    #[error("label `{0}` is not in the schema label vocabulary")]
    LabelNotInVocab(String),

    #[error("selection `{0}` matches no records")]
    EmptySelection(String),

    #[error("segment `{segment}` cannot be migrated automatically ({reason}); supply a rule override")]
    UnresolvableSegment { segment: String, reason: String },

    #[error("invalid template `{id}`: {reason}")]
    InvalidTemplate { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable upper-case code naming the failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO_FAILURE",
            Error::Parse { .. } => "PARSE_FAILURE",
            Error::InvalidSchema(_) => "INVALID_SCHEMA",
            Error::UnknownTypeOrCategory { .. } => "UNKNOWN_TYPE_OR_CATEGORY",
            Error::UnknownParameter(_) => "UNKNOWN_PARAMETER",
            Error::UnknownToken { .. } => "UNKNOWN_TOKEN",
            Error::MalformedOneHot { .. } => "MALFORMED_ONE_HOT",
            Error::KTooSmall(_) => "K_TOO_SMALL",
            Error::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            Error::BoundsOrder { .. } => "BOUNDS_ORDER",
            Error::OutOfRange { .. } => "OUT_OF_RANGE",
            Error::NonpositiveScale(_) => "NONPOSITIVE_SCALE",
            Error::InsufficientState(_) => "INSUFFICIENT_STATE",
            Error::NonfiniteValue(_) => "NONFINITE_VALUE",
            Error::UnsupportedForEncoding { .. } => "UNSUPPORTED_FOR_ENCODING",
            Error::RawValueMissing { .. } => "RAW_VALUE_MISSING",
            Error::ValueOutsideNewBounds { .. } => "VALUE_OUTSIDE_NEW_BOUNDS",
            Error::SchemaMismatch { .. } => "SCHEMA_MISMATCH",
            Error::FingerprintMismatch { .. } => "FINGERPRINT_MISMATCH",
            Error::FingerprintMix(..) => "FINGERPRINT_MIX",
            Error::ArityMismatch { .. } => "ARITY_MISMATCH",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::MalformedLine { .. } => "MALFORMED_LINE",
            Error::WidthMismatch { .. } => "WIDTH_MISMATCH",
            Error::LabelNotInVocab(_) => "LABEL_NOT_IN_VOCAB",
            Error::EmptySelection(_) => "EMPTY_SELECTION",
            Error::UnresolvableSegment { .. } => "UNRESOLVABLE_SEGMENT",
            Error::InvalidTemplate { .. } => "INVALID_TEMPLATE",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
