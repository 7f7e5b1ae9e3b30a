use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    FileIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate (region, date) rows for {region} on {date}: lines {lines:?}")]
    DuplicateRow {
        region: String,
        date: String,
        lines: Vec<u64>,
    },

    #[error("region {region}: missing day between {before} and {after}; series must be daily without gaps")]
    DateGap {
        region: String,
        before: String,
        after: String,
    },

    #[error("region {region}: cumulative {column} decreases at {date} (strict mode)")]
    NonCumulative {
        region: String,
        column: &'static str,
        date: String,
    },

    #[error("region {region}: population must be a positive integer")]
    BadPopulation { region: String },

    #[error("regions with series data but no population record: {regions:?}")]
    MissingPopulation { regions: Vec<String> },

    #[error("no usable blocks: {0}")]
    EmptyDataset(String),

    #[error("all candidate orders produced only spurious solutions")]
    AllSpurious,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AllSpurious => 3,
            Error::FileIo { .. }
            | Error::MalformedRow { .. }
            | Error::DuplicateRow { .. }
            | Error::DateGap { .. }
            | Error::NonCumulative { .. }
            | Error::BadPopulation { .. }
            | Error::MissingPopulation { .. }
            | Error::EmptyDataset(_) => 2,
            _ => 1,
        }
    }
}
