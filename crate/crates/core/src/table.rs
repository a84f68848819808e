//! Analysis-ready table: one row per observation with vacancy covariates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Experience, Hours, JobType, Shift};
use crate::identity::{Ethnicity, Gender};
use crate::store::StoreError;

/// Vacancy covariates available to models with job controls, in column order.
pub const JOB_COVARIATES: [&str; 9] = [
    "occupation",
    "experience_req",
    "job_type",
    "shift",
    "hours",
    "lang_dutch",
    "lang_french",
    "lang_english",
    "location",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub trial_id: String,
    pub vacancy_id: String,
    pub ethnicity: Ethnicity,
    pub gender: Gender,
    pub first: String,
    pub last: String,
    pub temperature: f64,
    pub score: Option<u8>,
    pub occupation: String,
    pub experience_req: Experience,
    pub job_type: JobType,
    pub shift: Shift,
    pub hours: Hours,
    pub lang_dutch: String,
    pub lang_french: String,
    pub lang_english: String,
    pub location: String,
}

impl AnalysisRow {
    /// Level label of a job covariate, `None` for unknown names.
    pub fn covariate(&self, name: &str) -> Option<String> {
        use crate::corpus::label;
        Some(match name {
            "occupation" => self.occupation.clone(),
            "experience_req" => label(&self.experience_req),
            "job_type" => label(&self.job_type),
            "shift" => label(&self.shift),
            "hours" => label(&self.hours),
            "lang_dutch" => self.lang_dutch.clone(),
            "lang_french" => self.lang_french.clone(),
            "lang_english" => self.lang_english.clone(),
            "location" => self.location.clone(),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisTable {
    pub rows: Vec<AnalysisRow>,
}

impl AnalysisTable {
    pub fn new(rows: Vec<AnalysisRow>) -> Self {
        AnalysisTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows with a recorded score.
    pub fn complete_cases(&self) -> AnalysisTable {
        AnalysisTable::new(self.rows.iter().filter(|r| r.score.is_some()).cloned().collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        if self.rows.is_empty() {
            w.write_record(HEADER)?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|source| StoreError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header != HEADER {
            return Err(StoreError::Schema {
                path: path.as_ref().to_path_buf(),
                line: 1,
                message: format!("unexpected header {}", header.join(",")),
            });
        }
        let rows = r.deserialize().collect::<Result<Vec<AnalysisRow>, _>>()?;
        Ok(AnalysisTable { rows })
    }
}

pub const HEADER: [&str; 17] = [
    "trial_id",
    "vacancy_id",
    "ethnicity",
    "gender",
    "first",
    "last",
    "temperature",
    "score",
    "occupation",
    "experience_req",
    "job_type",
    "shift",
    "hours",
    "lang_dutch",
    "lang_french",
    "lang_english",
    "location",
];
