//! Append-only, resumable observation log (`obs.jsonl`) and table export.

mod export;
mod log;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{export_table, join_observations};
pub use log::{MemorySink, ObservationSink, RunLog};

use crate::design::TemperatureScheme;
use crate::identity::{Ethnicity, Gender};
use crate::prompting::ParseFailure;

#[derive(Debug, Error)]
pub enum StoreError {
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
    #[error("trial {0} is already recorded")]
    Duplicate(String),
    #[error("observation {trial_id} is invalid: {message}")]
    InvalidObservation { trial_id: String, message: String },
    #[error("log {path} belongs to plan {found}, not {expected}")]
    ManifestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("log contains trial {0}, which is not in the plan")]
    UnknownTrial(String),
    #[error("vacancy {0} referenced by the log is not in the corpus")]
    UnknownVacancy(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingReason {
    Refusal,
    NoInteger,
    OutOfRange,
    Ambiguous,
    TransportFailure,
}

impl From<ParseFailure> for MissingReason {
    fn from(f: ParseFailure) -> Self {
        match f {
            ParseFailure::Refusal => MissingReason::Refusal,
            ParseFailure::NoInteger => MissingReason::NoInteger,
            ParseFailure::OutOfRange => MissingReason::OutOfRange,
            ParseFailure::Ambiguous => MissingReason::Ambiguous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub trial_id: String,
    pub vacancy_id: String,
    pub ethnicity: Ethnicity,
    pub gender: Gender,
    pub first: String,
    pub last: String,
    pub temperature: f64,
    pub score: Option<u8>,
    pub missing_reason: Option<MissingReason>,
    /// Final raw response; absent only after transport failure.
    pub raw_response: Option<String>,
    pub prompt_digest: String,
    pub model_id: String,
    pub timestamp: String,
    pub attempt_count: u32,
}

impl Observation {
    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |message: &str| {
            Err(StoreError::InvalidObservation {
                trial_id: self.trial_id.clone(),
                message: message.to_string(),
            })
        };
        match (self.score, self.missing_reason) {
            (Some(s), None) if (1..=100).contains(&s) => Ok(()),
            (Some(_), None) => bad("score outside [1, 100]"),
            (None, Some(_)) => Ok(()),
            (Some(_), Some(_)) => bad("has both a score and a missing reason"),
            (None, None) => bad("has neither a score nor a missing reason"),
        }
    }
}

/// First record of every log; ties the observations to one plan and
/// provider configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub plan_digest: String,
    pub scheme: TemperatureScheme,
    pub config_digest: String,
    pub model_id: String,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn obs(id: &str, score: Option<u8>) -> Observation {
        Observation {
            trial_id: id.to_string(),
            vacancy_id: "v1".into(),
            ethnicity: Ethnicity::Dutch,
            gender: Gender::Male,
            first: "Jan".into(),
            last: "Peeters".into(),
            temperature: 0.0,
            score,
            missing_reason: if score.is_some() {
                None
            } else {
                Some(MissingReason::Refusal)
            },
            raw_response: Some(score.map_or("no".into(), |s| s.to_string())),
            prompt_digest: "d".into(),
            model_id: "m".into(),
            timestamp: "2024-01-01T00:00:00Z".into(),
            attempt_count: 1,
        }
    }

    #[test]
    fn score_xor_missing() {
        assert!(obs("a", Some(50)).validate().is_ok());
        assert!(obs("a", None).validate().is_ok());
        let mut both = obs("a", Some(50));
        both.missing_reason = Some(MissingReason::Ambiguous);
        assert!(both.validate().is_err());
        let mut neither = obs("a", None);
        neither.missing_reason = None;
        assert!(neither.validate().is_err());
        assert!(obs("a", Some(0)).validate().is_err());
    }
}
