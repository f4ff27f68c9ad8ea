use std::path::PathBuf;

use crate::registry::{CountryCode, Family, RirId};

/// Errors produced across the audit library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed prefix {text:?}: {reason}")]
    MalformedPrefix { text: String, reason: &'static str },

    #[error("malformed address {0:?}")]
    MalformedAddress(String),

    #[error("invalid country code {0:?}")]
    InvalidCountryCode(String),

    #[error("unknown RIR {0:?}")]
    UnknownRir(String),

    #[error("country {0} is not in the region map")]
    UnknownCountry(CountryCode),

    #[error("inverted range: start is after end")]
    InvertedRange,

    #[error("range endpoints belong to different address families")]
    MixedFamily,

    #[error("expected a {expected} prefix, got {got}")]
    FamilyMismatch { expected: Family, got: Family },

    #[error("region map is invalid: {0}")]
    InvalidRegionMap(String),

    #[error("no dialect configured for {0}")]
    UnknownDialect(RirId),

    #[error("invalid dialect configuration: {0}")]
    InvalidDialect(String),

    #[error("unreadable stream: {0}")]
    UnreadableStream(#[source] std::io::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("no responses for target")]
    NoResponses,

    #[error("negative round-trip time {0}")]
    NegativeRtt(f64),

    #[error("empty geolocation set")]
    EmptyGeoSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Measure(#[from] crate::measure::MeasureError),

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
