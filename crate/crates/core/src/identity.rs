//! Candidate identity categories signalled through names.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ethnicity {
    Arab,
    Asian,
    BlackAmerican,
    CentralAfrican,
    Dutch,
    EasternEuropean,
    Hispanic,
    Turkish,
    WhiteAmerican,
}

impl Ethnicity {
    pub const ALL: [Ethnicity; 9] = [
        Ethnicity::Arab,
        Ethnicity::Asian,
        Ethnicity::BlackAmerican,
        Ethnicity::CentralAfrican,
        Ethnicity::Dutch,
        Ethnicity::EasternEuropean,
        Ethnicity::Hispanic,
        Ethnicity::Turkish,
        Ethnicity::WhiteAmerican,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::Arab => "Arab",
            Ethnicity::Asian => "Asian",
            Ethnicity::BlackAmerican => "BlackAmerican",
            Ethnicity::CentralAfrican => "CentralAfrican",
            Ethnicity::Dutch => "Dutch",
            Ethnicity::EasternEuropean => "EasternEuropean",
            Ethnicity::Hispanic => "Hispanic",
            Ethnicity::Turkish => "Turkish",
            Ethnicity::WhiteAmerican => "WhiteAmerican",
        }
    }

    /// Short code used in trial identifiers.
    pub fn code(self) -> &'static str {
        match self {
            Ethnicity::Arab => "ARB",
            Ethnicity::Asian => "ASN",
            Ethnicity::BlackAmerican => "BAM",
            Ethnicity::CentralAfrican => "CAF",
            Ethnicity::Dutch => "DUT",
            Ethnicity::EasternEuropean => "EEU",
            Ethnicity::Hispanic => "HSP",
            Ethnicity::Turkish => "TRK",
            Ethnicity::WhiteAmerican => "WAM",
        }
    }
}

impl fmt::Display for Ethnicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ethnicity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ethnicity::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown ethnicity `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            _ => Err(format!("unknown gender `{s}`")),
        }
    }
}

/// Every (ethnicity, gender) cell of the identity grid, in canonical order.
pub fn identity_grid() -> impl Iterator<Item = (Ethnicity, Gender)> {
    Ethnicity::ALL
        .into_iter()
        .flat_map(|e| Gender::ALL.into_iter().map(move |g| (e, g)))
}
