use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::identity::{Ethnicity, Gender};

/// Token in a CV body that is replaced by the candidate's full name.
pub const NAME_PLACEHOLDER: &str = "{{NAME}}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experience {
    /// No professional experience required.
    None,
    /// At least two years.
    Min2y,
    /// At least five years.
    Min5y,
}

impl Experience {
    pub const ALL: [Experience; 3] = [Experience::None, Experience::Min2y, Experience::Min5y];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobType {
    Permanent,
    Temporary,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    Day,
    TwoShift,
    ThreeShift,
    Night,
    Interrupted,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hours {
    FullTime,
    PartTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Dutch,
    French,
    English,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Dutch, Language::French, Language::English];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proficiency {
    NotAtAll,
    Basic,
    Moderate,
    Good,
    VeryGood,
}

/// Serialized label of any unit-like enum above (`"min2y"`, `"full_time"`, ...).
pub fn label<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => panic!("label() called on a non-unit value: {other:?}"),
    }
}

macro_rules! display_via_label {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&label(self))
            }
        }
    )*};
}
display_via_label!(Experience, JobType, Shift, Hours, Language, Proficiency);

/// A job posting with the structured covariates used as vacancy-level controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vacancy {
    pub id: String,
    pub occupation: String,
    pub experience_req: Experience,
    pub job_type: JobType,
    pub shift: Shift,
    pub hours: Hours,
    /// Required proficiency per mentioned language; absent languages are not required.
    #[serde(default)]
    pub lang_req: BTreeMap<Language, Proficiency>,
    pub location: String,
    pub body: String,
}

impl Vacancy {
    /// Level of a language requirement as used in analysis tables.
    pub fn language_level(&self, language: Language) -> String {
        self.lang_req
            .get(&language)
            .map(label)
            .unwrap_or_else(|| "not_required".to_string())
    }

    /// Level label of a named job covariate, `None` for unknown names.
    pub fn covariate(&self, name: &str) -> Option<String> {
        Some(match name {
            "occupation" => self.occupation.clone(),
            "experience_req" => label(&self.experience_req),
            "job_type" => label(&self.job_type),
            "shift" => label(&self.shift),
            "hours" => label(&self.hours),
            "lang_dutch" => self.language_level(Language::Dutch),
            "lang_french" => self.language_level(Language::French),
            "lang_english" => self.language_level(Language::English),
            "location" => self.location.clone(),
            _ => return None,
        })
    }
}

/// The CV body matched to one vacancy; only the name varies between trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvTemplate {
    pub vacancy_id: String,
    pub body: String,
    pub degree_spec: String,
    pub grad_year: i32,
    pub experience_summary: String,
}

impl CvTemplate {
    pub fn placeholder_count(&self) -> usize {
        self.body.matches(NAME_PLACEHOLDER).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NameEntry {
    pub first: String,
    pub last: String,
    pub ethnicity: Ethnicity,
    pub gender: Gender,
    pub source: String,
}

impl NameEntry {
    pub fn full_name(&self) -> String {
        format!("{} {}", self.first, self.last)
    }
}
