use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Rejection;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("distribution has zero total")]
    EmptyDistribution,

    #[error("zero iterations and no warm start: nothing to evaluate")]
    NoCandidates,

    #[error("pool has {distinct} distinct probabilities, exhaustive search supports at most {max}")]
    TooLarge { distinct: usize, max: usize },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("invalid record: {0}")]
    InvalidRecord(Rejection),

    #[error("no fitted thresholds for eligible group {0}")]
    MissingFit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trial {trial} has no eligible groups")]
    NoEligibleGroups { trial: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyInput => "EmptyInput",
            Error::EmptyDistribution => "EmptyDistribution",
            Error::NoCandidates => "NoCandidates",
            Error::TooLarge { .. } => "TooLarge",
            Error::InvalidThresholds(_) => "InvalidThresholds",
            Error::InvalidRecord(_) => "InvalidRecord",
            Error::MissingFit(_) => "MissingFit",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NoEligibleGroups { .. } => "NoEligibleGroups",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Schema(_) => "SchemaError",
            Error::Io { .. } => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}
