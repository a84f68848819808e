use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::identity::{Ethnicity, Gender};
use crate::table::{AnalysisRow, AnalysisTable, JOB_COVARIATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Ethnicity and temperature.
    Eq1,
    /// Adds gender and job covariates.
    Eq2,
    /// Adds ethnicity × gender.
    Eq3,
    /// Job covariates interacted with ethnicity.
    Eq4,
    /// Job covariates interacted with gender.
    Eq5,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Eq1 => "eq1",
            ModelKind::Eq2 => "eq2",
            ModelKind::Eq3 => "eq3",
            ModelKind::Eq4 => "eq4",
            ModelKind::Eq5 => "eq5",
        })
    }
}

impl FromStr for ModelKind {
    type Err = StatsError;
    fn from_str(s: &str) -> Result<Self, StatsError> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "eq1" => ModelKind::Eq1,
            "eq2" => ModelKind::Eq2,
            "eq3" => ModelKind::Eq3,
            "eq4" => ModelKind::Eq4,
            "eq5" => ModelKind::Eq5,
            other => return Err(StatsError::UnknownFactor(format!("model {other}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureEncoding {
    #[default]
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub temperature: TemperatureEncoding,
    /// Job covariates interacted with the focal identity in eq4/eq5.
    #[serde(default = "all_job_covariates")]
    pub by: Vec<String>,
    /// Reference level overrides, factor → level.
    #[serde(default)]
    pub references: BTreeMap<String, String>,
}

fn all_job_covariates() -> Vec<String> {
    JOB_COVARIATES.iter().map(|s| s.to_string()).collect()
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            temperature: TemperatureEncoding::Categorical,
            by: all_job_covariates(),
            references: BTreeMap::new(),
        }
    }

    fn main_effects(&self) -> Vec<&str> {
        let mut f = vec!["ethnicity"];
        if self.kind != ModelKind::Eq1 {
            f.push("gender");
        }
        f.push("temperature");
        if self.kind != ModelKind::Eq1 {
            f.extend(JOB_COVARIATES);
        }
        f
    }

    fn interactions(&self) -> Vec<(&str, &str)> {
        match self.kind {
            ModelKind::Eq1 | ModelKind::Eq2 => vec![],
            ModelKind::Eq3 => vec![("ethnicity", "gender")],
            ModelKind::Eq4 => self.by.iter().map(|b| ("ethnicity", b.as_str())).collect(),
            ModelKind::Eq5 => self.by.iter().map(|b| ("gender", b.as_str())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Intercept,
    Dummy,
    Interaction,
    Continuous,
}

/// One factor of a column: an indicator of `factor = level` or a numeric variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Level { factor: String, level: String },
    Continuous { name: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub label: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
    /// Product of these terms gives `values`; empty for the intercept.
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorInfo {
    pub levels: Vec<String>,
    pub reference: String,
    /// Level index per row.
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub references: BTreeMap<String, String>,
    /// Interaction columns removed because no row has the combination.
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub model: String,
    pub response: Vec<f64>,
    pub columns: Vec<Column>,
    pub cluster_ids: Vec<usize>,
    pub cluster_labels: Vec<String>,
    pub encoding: Encoding,
    pub factors: IndexMap<String, FactorInfo>,
    pub continuous: IndexMap<String, Vec<f64>>,
}

impl DesignMatrix {
    /// Assemble a design from explicit columns (for custom models and tests).
    pub fn new(
        response: Vec<f64>,
        columns: Vec<Column>,
        cluster_ids: Vec<usize>,
    ) -> Result<Self, StatsError> {
        let n = response.len();
        if n == 0 {
            return Err(StatsError::EmptyDesign);
        }
        for c in &columns {
            if c.values.len() != n {
                return Err(StatsError::Domain(format!(
                    "column {} has {} rows, response has {n}",
                    c.label,
                    c.values.len()
                )));
            }
            if c.kind == ColumnKind::Dummy && c.values.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(StatsError::Domain(format!("dummy column {} is not 0/1", c.label)));
            }
        }
        if cluster_ids.len() != n {
            return Err(StatsError::Domain("cluster ids must cover every row".into()));
        }
        let n_clusters = cluster_ids.iter().max().map_or(0, |m| m + 1);
        let d = DesignMatrix {
            model: "custom".into(),
            response,
            columns,
            cluster_labels: (0..n_clusters).map(|g| g.to_string()).collect(),
            cluster_ids,
            encoding: Encoding::default(),
            factors: IndexMap::new(),
            continuous: IndexMap::new(),
        };
        d.check_rank()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_labels.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.label.clone()).collect()
    }

    pub fn column(&self, label: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.label == label)
    }

    pub fn x(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k(), |i, j| self.columns[j].values[i])
    }

    /// Same design with another response (e.g. a binarised score).
    pub fn with_response(&self, response: Vec<f64>) -> Self {
        assert_eq!(response.len(), self.n());
        DesignMatrix {
            response,
            ..self.clone()
        }
    }

    /// Row values of a single term.
    pub fn term_values(&self, term: &Term) -> Result<Vec<f64>, StatsError> {
        match term {
            Term::Level { factor, level } => {
                let info = self
                    .factors
                    .get(factor)
                    .ok_or_else(|| StatsError::UnknownFactor(factor.clone()))?;
                let idx = info.levels.iter().position(|l| l == level).ok_or_else(|| {
                    StatsError::UnknownLevel {
                        factor: factor.clone(),
                        level: level.clone(),
                    }
                })?;
                Ok(info.codes.iter().map(|&c| f64::from(u8::from(c == idx))).collect())
            }
            Term::Continuous { name } => self
                .continuous
                .get(name)
                .cloned()
                .ok_or_else(|| StatsError::UnknownFactor(name.clone())),
        }
    }

    /// Fails naming every column that is a linear combination of earlier ones.
    pub fn check_rank(&self) -> Result<(), StatsError> {
        let (n, k) = (self.n(), self.k());
        if k == 0 {
            return Ok(());
        }
        if k > n {
            return Err(StatsError::RankDeficient {
                columns: self.columns[n..].iter().map(|c| c.label.clone()).collect(),
            });
        }
        self.check_r(&self.x().qr().unpack_r())
    }

    /// Rank check against the triangular factor of an existing QR of `x()`.
    pub(crate) fn check_r(&self, r: &DMatrix<f64>) -> Result<(), StatsError> {
        let collinear: Vec<String> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(j, c)| {
                let norm = c.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                r[(*j, *j)].abs() <= 1e-9 * norm.max(1.0)
            })
            .map(|(_, c)| c.label.clone())
            .collect();
        if collinear.is_empty() {
            Ok(())
        } else {
            Err(StatsError::RankDeficient { columns: collinear })
        }
    }
}

fn factor_value(row: &AnalysisRow, factor: &str) -> Result<String, StatsError> {
    Ok(match factor {
        "ethnicity" => row.ethnicity.as_str().to_string(),
        "gender" => row.gender.as_str().to_string(),
        "temperature" => format!("{:.2}", row.temperature),
        other => row
            .covariate(other)
            .ok_or_else(|| StatsError::UnknownFactor(other.to_string()))?,
    })
}

fn ordered_levels(factor: &str, present: Vec<String>) -> Vec<String> {
    let mut levels = present;
    levels.sort();
    levels.dedup();
    match factor {
        "ethnicity" => Ethnicity::ALL
            .iter()
            .map(|e| e.as_str().to_string())
            .filter(|l| levels.contains(l))
            .collect(),
        "gender" => Gender::ALL
            .iter()
            .map(|g| g.as_str().to_string())
            .filter(|l| levels.contains(l))
            .collect(),
        "temperature" => {
            levels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
            levels
        }
        _ => levels,
    }
}

fn default_reference(factor: &str, levels: &[String]) -> String {
    let preferred = match factor {
        "ethnicity" => Some(Ethnicity::Dutch.as_str()),
        "gender" => Some(Gender::Male.as_str()),
        _ => None,
    };
    preferred
        .filter(|p| levels.iter().any(|l| l == p))
        .map(String::from)
        .unwrap_or_else(|| levels[0].clone())
}

/// Encode the complete cases of `table` for one of the five model
/// specifications. Column order: intercept, main effects (in
/// specification order, levels in canonical order), interactions.
pub fn build_design(table: &AnalysisTable, spec: &ModelSpec) -> Result<DesignMatrix, StatsError> {
    let rows: Vec<&AnalysisRow> = table.rows.iter().filter(|r| r.score.is_some()).collect();
    if rows.is_empty() {
        return Err(StatsError::EmptyDesign);
    }
    for b in &spec.by {
        if !JOB_COVARIATES.contains(&b.as_str()) {
            return Err(StatsError::UnknownFactor(b.clone()));
        }
    }
    for f in spec.references.keys() {
        if !matches!(f.as_str(), "ethnicity" | "gender" | "temperature")
            && !JOB_COVARIATES.contains(&f.as_str())
        {
            return Err(StatsError::UnknownFactor(f.clone()));
        }
    }
    let response: Vec<f64> = rows.iter().map(|r| f64::from(r.score.unwrap())).collect();
    let n = rows.len();

    let mut needed: Vec<&str> = spec.main_effects();
    for (a, b) in spec.interactions() {
        for f in [a, b] {
            if !needed.contains(&f) {
                needed.push(f);
            }
        }
    }
    let continuous_temp = spec.temperature == TemperatureEncoding::Continuous;

    let mut factors: IndexMap<String, FactorInfo> = IndexMap::new();
    let mut continuous: IndexMap<String, Vec<f64>> = IndexMap::new();
    let mut encoding = Encoding::default();
    for &f in &needed {
        if f == "temperature" && continuous_temp {
            continuous.insert(f.to_string(), rows.iter().map(|r| r.temperature).collect());
            continue;
        }
        let values: Vec<String> = rows.iter().map(|r| factor_value(r, f)).collect::<Result<_, _>>()?;
        let levels = ordered_levels(f, values.clone());
        let reference = match spec.references.get(f) {
            Some(level) if levels.contains(level) => level.clone(),
            Some(level) => {
                return Err(StatsError::UnknownLevel {
                    factor: f.to_string(),
                    level: level.clone(),
                })
            }
            None => default_reference(f, &levels),
        };
        let index: HashMap<&str, usize> =
            levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let codes = values.iter().map(|v| index[v.as_str()]).collect();
        encoding.references.insert(f.to_string(), reference.clone());
        factors.insert(
            f.to_string(),
            FactorInfo {
                levels,
                reference,
                codes,
            },
        );
    }

    let level_terms = |f: &str| -> Vec<(Term, Vec<f64>)> {
        if let Some(values) = continuous.get(f) {
            return vec![(Term::Continuous { name: f.to_string() }, values.clone())];
        }
        let info = &factors[f];
        info.levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != info.reference)
            .map(|(i, l)| {
                let values = info.codes.iter().map(|&c| f64::from(u8::from(c == i))).collect();
                (
                    Term::Level {
                        factor: f.to_string(),
                        level: l.clone(),
                    },
                    values,
                )
            })
            .collect()
    };
    let term_label = |t: &Term| match t {
        Term::Level { factor, level } => format!("{factor}={level}"),
        Term::Continuous { name } => name.clone(),
    };

    let mut columns = vec![Column {
        label: "(intercept)".into(),
        kind: ColumnKind::Intercept,
        values: vec![1.0; n],
        terms: vec![],
    }];
    for f in spec.main_effects() {
        for (term, values) in level_terms(f) {
            let kind = match term {
                Term::Continuous { .. } => ColumnKind::Continuous,
                Term::Level { .. } => ColumnKind::Dummy,
            };
            columns.push(Column {
                label: term_label(&term),
                kind,
                values,
                terms: vec![term],
            });
        }
    }
    for (a, b) in spec.interactions() {
        let right = level_terms(b);
        for (ta, va) in level_terms(a) {
            for (tb, vb) in &right {
                let values: Vec<f64> = va.iter().zip(vb).map(|(x, y)| x * y).collect();
                let label = format!("{}:{}", term_label(&ta), term_label(tb));
                if values.iter().all(|&v| v == 0.0) {
                    encoding.dropped.push(label);
                    continue;
                }
                columns.push(Column {
                    label,
                    kind: ColumnKind::Interaction,
                    values,
                    terms: vec![ta.clone(), tb.clone()],
                });
            }
        }
    }

    let mut cluster_index: IndexMap<&str, usize> = IndexMap::new();
    let cluster_ids = rows
        .iter()
        .map(|r| {
            let next = cluster_index.len();
            *cluster_index.entry(r.vacancy_id.as_str()).or_insert(next)
        })
        .collect();
    let design = DesignMatrix {
        model: spec.kind.to_string(),
        response,
        columns,
        cluster_ids,
        cluster_labels: cluster_index.keys().map(|s| s.to_string()).collect(),
        encoding,
        factors,
        continuous,
    };
    design.check_rank()?;
    Ok(design)
}
