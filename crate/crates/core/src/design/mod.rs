//! Factorial experiment plan: every vacancy crossed with the 9 × 2 identity
//! grid, with names and temperatures drawn from seed-derived streams.

mod plan;
mod scheme;

use std::path::PathBuf;

use thiserror::Error;

pub use plan::{build_plan, ExperimentPlan, PlanHeader, Trial};
pub use scheme::{sample_temperature, SchemeEntry, TemperatureScheme};

use crate::corpus::CorpusError;
use crate::identity::{Ethnicity, Gender};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid temperature scheme: {0}")]
    InvalidScheme(String),
    #[error("no names available for {ethnicity}×{gender}")]
    EmptyCell { ethnicity: Ethnicity, gender: Gender },
    #[error("plan was built for corpus {expected}, but the supplied corpus hashes to {found}")]
    DigestMismatch { expected: String, found: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
}
