//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received arguments outside its contract.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("cannot read {path}: {source}")]
    FileRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    FileWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed record in an event file, reported with its line number.
    #[error("{path}: line {line}: {why}")]
    Record {
        path: PathBuf,
        line: usize,
        why: String,
    },

    /// A matrix / curve / table file that does not follow the documented format.
    #[error("malformed file {path}: {why}")]
    Format { path: PathBuf, why: String },

    #[error(
        "insufficient history: no qualifying days for slot-of-day {slot_of_day} \
         (window of {window_days} days ending at day {end_day})"
    )]
    InsufficientHistory {
        slot_of_day: u32,
        window_days: u32,
        end_day: i64,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("empty evaluation set")]
    EmptyEvaluation,

    /// The analytic per-cell bound failed; this signals a numerical bug, not bad input.
    #[error("expression-error bound violated at cell ({x},{y}): value {value} vs bound {bound}")]
    BoundViolation {
        x: u32,
        y: u32,
        value: f64,
        bound: f64,
    },

    /// Wraps an error with the pipeline stage that produced it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    /// Tag this error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
