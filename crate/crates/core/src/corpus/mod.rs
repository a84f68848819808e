//! Vacancy, CV-template and name-pool ingestion, validation and synthesis.
//!
//! On-disk formats: `vacancies.jsonl` and `cvs.jsonl` hold one JSON object
//! per line, `names.csv` has the header `first,last,ethnicity,gender,source`.

mod io;
mod model;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use thiserror::Error;

use crate::digest::PartHasher;
use crate::identity::{identity_grid, Ethnicity, Gender};

pub use io::{load_corpus, load_corpus_dir, load_corpus_with, save_corpus, LoadOptions};
pub use model::{
    label, CvTemplate, Experience, Hours, JobType, Language, NameEntry, Proficiency, Shift,
    Vacancy, NAME_PLACEHOLDER,
};
pub use synth::{
    default_occupations, generate_synthetic_corpus, Allocation, CorpusConfig, Marginal,
};

pub const VACANCY_FILE: &str = "vacancies.jsonl";
pub const CV_FILE: &str = "cvs.jsonl";
pub const NAME_FILE: &str = "names.csv";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: schema violation: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("CV template references unknown vacancy `{vacancy_id}`")]
    DanglingReference { vacancy_id: String },
    #[error("vacancy `{0}` has no CV template")]
    MissingCv(String),
    #[error("vacancy `{0}` has more than one CV template")]
    DuplicateCv(String),
    #[error("duplicate vacancy id `{0}`")]
    DuplicateVacancy(String),
    #[error("empty cell {ethnicity}×{gender}")]
    EmptyCell { ethnicity: Ethnicity, gender: Gender },
    #[error("CV for vacancy `{vacancy_id}` contains the name placeholder {count} times (expected exactly 1)")]
    Placeholder { vacancy_id: String, count: usize },
    #[error("vacancy `{id}`: {message}")]
    InvalidVacancy { id: String, message: String },
    #[error("invalid name entry `{first} {last}`: {message}")]
    InvalidName {
        first: String,
        last: String,
        message: String,
    },
    #[error("marginal for `{covariate}` sums to {sum} (expected 1)")]
    MarginalSum { covariate: String, sum: f64 },
    #[error("invalid corpus configuration: {0}")]
    Config(String),
}

/// A validated corpus: every CV matches a vacancy and every identity cell
/// of the name pool is populated.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vacancies: Vec<Vacancy>,
    pub cvs: Vec<CvTemplate>,
    pub names: Vec<NameEntry>,
}

impl Corpus {
    /// Validate raw collections and assemble a corpus.
    pub fn new(
        vacancies: Vec<Vacancy>,
        cvs: Vec<CvTemplate>,
        names: Vec<NameEntry>,
    ) -> Result<Self, CorpusError> {
        let corpus = Corpus {
            vacancies,
            cvs,
            names,
        };
        corpus.validate(None)?;
        Ok(corpus)
    }

    pub fn validate(&self, occupations: Option<&[String]>) -> Result<(), CorpusError> {
        let mut ids = HashSet::new();
        for v in &self.vacancies {
            if !ids.insert(v.id.as_str()) {
                return Err(CorpusError::DuplicateVacancy(v.id.clone()));
            }
            if v.id.trim().is_empty() {
                return Err(CorpusError::InvalidVacancy {
                    id: v.id.clone(),
                    message: "empty id".into(),
                });
            }
            if v.body.trim().is_empty() {
                return Err(CorpusError::InvalidVacancy {
                    id: v.id.clone(),
                    message: "empty body".into(),
                });
            }
            if let Some(allowed) = occupations {
                if !allowed.iter().any(|o| o == &v.occupation) {
                    return Err(CorpusError::InvalidVacancy {
                        id: v.id.clone(),
                        message: format!("occupation `{}` not in the configured set", v.occupation),
                    });
                }
            }
        }

        let mut seen_cv = HashSet::new();
        for cv in &self.cvs {
            if !ids.contains(cv.vacancy_id.as_str()) {
                return Err(CorpusError::DanglingReference {
                    vacancy_id: cv.vacancy_id.clone(),
                });
            }
            if !seen_cv.insert(cv.vacancy_id.as_str()) {
                return Err(CorpusError::DuplicateCv(cv.vacancy_id.clone()));
            }
            let count = cv.placeholder_count();
            if count != 1 {
                return Err(CorpusError::Placeholder {
                    vacancy_id: cv.vacancy_id.clone(),
                    count,
                });
            }
        }
        if let Some(v) = self.vacancies.iter().find(|v| !seen_cv.contains(v.id.as_str())) {
            return Err(CorpusError::MissingCv(v.id.clone()));
        }

        for n in &self.names {
            if n.first.trim().is_empty() || n.last.trim().is_empty() {
                return Err(CorpusError::InvalidName {
                    first: n.first.clone(),
                    last: n.last.clone(),
                    message: "first and last name must be non-empty".into(),
                });
            }
        }
        let cells = self.name_cells();
        for (e, g) in identity_grid() {
            if cells.get(&(e, g)).is_none_or(|c| c.is_empty()) {
                return Err(CorpusError::EmptyCell {
                    ethnicity: e,
                    gender: g,
                });
            }
        }
        Ok(())
    }

    /// Names grouped by identity cell, preserving file order within each cell.
    pub fn name_cells(&self) -> BTreeMap<(Ethnicity, Gender), Vec<&NameEntry>> {
        let mut cells: BTreeMap<_, Vec<&NameEntry>> = BTreeMap::new();
        for n in &self.names {
            cells.entry((n.ethnicity, n.gender)).or_default().push(n);
        }
        cells
    }

    pub fn vacancy(&self, id: &str) -> Option<&Vacancy> {
        self.vacancies.iter().find(|v| v.id == id)
    }

    pub fn vacancy_index(&self) -> HashMap<&str, &Vacancy> {
        self.vacancies.iter().map(|v| (v.id.as_str(), v)).collect()
    }

    pub fn cv_index(&self) -> HashMap<&str, &CvTemplate> {
        self.cvs.iter().map(|c| (c.vacancy_id.as_str(), c)).collect()
    }

    /// Order-insensitive content hash over all three collections.
    pub fn digest(&self) -> String {
        let mut vac: Vec<String> = self
            .vacancies
            .iter()
            .map(|v| serde_json::to_string(v).expect("vacancy serializes"))
            .collect();
        let mut cvs: Vec<String> = self
            .cvs
            .iter()
            .map(|c| serde_json::to_string(c).expect("cv serializes"))
            .collect();
        let mut names: Vec<String> = self
            .names
            .iter()
            .map(|n| serde_json::to_string(n).expect("name serializes"))
            .collect();
        vac.sort();
        cvs.sort();
        names.sort();
        let mut h = PartHasher::new();
        for section in [vac, cvs, names] {
            h.part(section.len().to_le_bytes());
            for item in section {
                h.part(item);
            }
        }
        h.finish_hex()
    }

    /// Vacancy counts per (occupation, experience) cell.
    pub fn balance(&self) -> BTreeMap<(String, Experience), usize> {
        let mut cells = BTreeMap::new();
        for v in &self.vacancies {
            *cells.entry((v.occupation.clone(), v.experience_req)).or_insert(0) += 1;
        }
        cells
    }

    /// Vacancy counts per experience level.
    pub fn experience_counts(&self) -> BTreeMap<Experience, usize> {
        let mut counts = BTreeMap::new();
        for v in &self.vacancies {
            *counts.entry(v.experience_req).or_insert(0) += 1;
        }
        counts
    }

    /// Logs a warning when occupation × experience cells are unequal.
    /// Sparse cells are allowed.
    pub fn warn_on_imbalance(&self) {
        let cells = self.balance();
        let (min, max) = cells
            .values()
            .fold((usize::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        if !cells.is_empty() && min != max {
            log::warn!(
                "unbalanced design: occupation × experience cells range from {min} to {max} vacancies"
            );
        }
        let occupations: HashSet<_> = cells.keys().map(|(o, _)| o.as_str()).collect();
        let missing = occupations.len() * Experience::ALL.len() - cells.len();
        if missing > 0 {
            log::warn!("{missing} occupation × experience cells have no vacancies");
        }
    }
}
