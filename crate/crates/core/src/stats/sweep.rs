use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_design, discrimination_ratio, discrimination_ratio_ci, fit_firth_logit,
    marginal_effects_at_mean, Column, ColumnKind, DesignMatrix, FactorInfo, ModelKind, ModelSpec,
    StatsError, TemperatureEncoding, Term, Z95,
};
use crate::identity::Ethnicity;
use crate::table::AnalysisTable;

/// Pseudo-group pooling every non-Dutch name.
pub const OTHER_GROUP: &str = "Other";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub min_cutoff: u8,
    pub max_cutoff: u8,
    #[serde(default)]
    pub temperature: TemperatureEncoding,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            min_cutoff: 1,
            max_cutoff: 100,
            temperature: TemperatureEncoding::Categorical,
        }
    }
}

/// Invitation probability and ratios for one group at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cutoff: u8,
    pub group: String,
    pub probability: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub or: f64,
    pub dr: f64,
    pub dr_lo: f64,
    pub dr_hi: f64,
    /// Empty, `constant_response`, `all_invited` or `none_invited`.
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn get(&self, cutoff: u8, group: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.cutoff == cutoff && r.group == group)
    }

    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.group) {
                out.push(r.group.clone());
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<Result<_, _>>()?;
        Ok(SweepResult { rows })
    }
}

/// The eq1 design with ethnicity collapsed to Dutch versus everyone else.
fn pooled_design(eq1: &DesignMatrix) -> Result<DesignMatrix, StatsError> {
    let eth = &eq1.factors["ethnicity"];
    let dutch = eth
        .levels
        .iter()
        .position(|l| l == Ethnicity::Dutch.as_str())
        .ok_or_else(|| StatsError::UnknownLevel {
            factor: "ethnicity".into(),
            level: Ethnicity::Dutch.as_str().into(),
        })?;
    let codes: Vec<usize> = eth.codes.iter().map(|&c| usize::from(c != dutch)).collect();
    let other = Column {
        label: format!("group={OTHER_GROUP}"),
        kind: ColumnKind::Dummy,
        values: codes.iter().map(|&c| c as f64).collect(),
        terms: vec![Term::Level {
            factor: "group".into(),
            level: OTHER_GROUP.into(),
        }],
    };
    let mut columns = vec![eq1.columns[0].clone(), other];
    columns.extend(
        eq1.columns
            .iter()
            .filter(|c| !c.label.starts_with("ethnicity=") && c.kind != ColumnKind::Intercept)
            .cloned(),
    );
    let mut factors = eq1.factors.clone();
    factors.shift_remove("ethnicity");
    factors.insert(
        "group".into(),
        FactorInfo {
            levels: vec![Ethnicity::Dutch.as_str().into(), OTHER_GROUP.into()],
            reference: Ethnicity::Dutch.as_str().into(),
            codes,
        },
    );
    let d = DesignMatrix {
        model: "eq1_pooled".into(),
        columns,
        factors,
        ..eq1.clone()
    };
    d.check_rank()?;
    Ok(d)
}

fn group_flag(y: &[f64], codes: &[usize], level: usize) -> String {
    let (mut n, mut s) = (0usize, 0.0);
    for (v, &c) in y.iter().zip(codes) {
        if c == level {
            n += 1;
            s += v;
        }
    }
    if n > 0 && s == n as f64 {
        "all_invited".into()
    } else if n > 0 && s == 0.0 {
        "none_invited".into()
    } else {
        String::new()
    }
}

/// Rows for one factor (ethnicity or the pooled group) at one cutoff.
fn rows_for(design: &DesignMatrix, factor: &str, cutoff: u8, skip_base: bool) -> Result<Vec<SweepRow>, StatsError> {
    let info = &design.factors[factor];
    let fit = fit_firth_logit(design)?;
    let mem = marginal_effects_at_mean(&fit, design, factor, None)?;
    let base = mem
        .iter()
        .find(|m| m.level == info.reference)
        .map(|m| m.estimate)
        .expect("reference level has a MEM");
    let mut rows = Vec::new();
    for (i, m) in mem.iter().enumerate() {
        let is_base = m.level == info.reference;
        if is_base && skip_base {
            continue;
        }
        let (or, (dr_lo, dr_hi), dr) = if is_base {
            (1.0, (1.0, 1.0), 1.0)
        } else {
            let label = format!("{factor}={}", m.level);
            let b = fit.coef(&label).expect("non-reference level has a column");
            let se = fit.se[label.as_str()];
            let or = b.exp();
            (
                or,
                discrimination_ratio_ci((b - Z95 * se).exp(), (b + Z95 * se).exp(), base)?,
                discrimination_ratio(or, base)?,
            )
        };
        rows.push(SweepRow {
            cutoff,
            group: m.level.clone(),
            probability: m.estimate,
            ci_lo: m.ci_lo,
            ci_hi: m.ci_hi,
            or,
            dr,
            dr_lo,
            dr_hi,
            flag: group_flag(&design.response, &info.codes, i),
        });
    }
    Ok(rows)
}

/// Binarise the score at every cutoff `n` (invited when score ≥ n) and fit a
/// penalised logit of ethnicity and temperature, plus a pooled Dutch versus
/// other model. Discrimination ratios use the Dutch MEM as the base rate.
pub fn threshold_sweep(table: &AnalysisTable, options: &SweepOptions) -> Result<SweepResult, StatsError> {
    if options.min_cutoff > options.max_cutoff {
        return Err(StatsError::Domain(format!(
            "cutoff range {}..{} is empty",
            options.min_cutoff, options.max_cutoff
        )));
    }
    let mut spec = ModelSpec::new(ModelKind::Eq1);
    spec.temperature = options.temperature;
    let eq1 = build_design(table, &spec)?;
    let pooled = pooled_design(&eq1)?;
    let scores = eq1.response.clone();
    let groups: Vec<String> = eq1.factors["ethnicity"]
        .levels
        .iter()
        .cloned()
        .chain(std::iter::once(OTHER_GROUP.to_string()))
        .collect();

    let per_cutoff: Vec<Vec<SweepRow>> = (options.min_cutoff..=options.max_cutoff)
        .into_par_iter()
        .map(|cutoff| -> Result<Vec<SweepRow>, StatsError> {
            let y: Vec<f64> = scores.iter().map(|&s| f64::from(u8::from(s >= f64::from(cutoff)))).collect();
            let first = y[0];
            if y.iter().all(|&v| v == first) {
                return Ok(groups
                    .iter()
                    .map(|g| SweepRow {
                        cutoff,
                        group: g.clone(),
                        probability: first,
                        ci_lo: first,
                        ci_hi: first,
                        or: 1.0,
                        dr: 1.0,
                        dr_lo: 1.0,
                        dr_hi: 1.0,
                        flag: "constant_response".into(),
                    })
                    .collect());
            }
            let mut rows = rows_for(&eq1.with_response(y.clone()), "ethnicity", cutoff, false)?;
            rows.extend(rows_for(&pooled.with_response(y), "group", cutoff, true)?);
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;
    Ok(SweepResult {
        rows: per_cutoff.into_iter().flatten().collect(),
    })
}
