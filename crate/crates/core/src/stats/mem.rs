use serde::{Deserialize, Serialize};

use super::firth::sigmoid;
use super::{DesignMatrix, FitResult, Link, StatsError, Term, Z95};

/// Predicted outcome for one level of the focal factor (optionally within a
/// level of `by`) with every other regressor held at its sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemPoint {
    pub factor: String,
    pub level: String,
    pub by_factor: Option<String>,
    pub by_level: Option<String>,
    /// On the response scale: a score for OLS, a probability for logit.
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Standard error of the linear predictor.
    pub se_link: f64,
}

/// Marginal effects at the mean for every level of `focal`.
///
/// Each column is evaluated as the product of its terms: focal and `by`
/// indicators are fixed at the chosen levels, and the product of the
/// remaining terms is replaced by its sample mean. Intervals come from
/// `x' V x` with the fit's covariance, so bootstrap covariances carry over.
pub fn marginal_effects_at_mean(
    fit: &FitResult,
    design: &DesignMatrix,
    focal: &str,
    by: Option<&str>,
) -> Result<Vec<MemPoint>, StatsError> {
    let k = design.k();
    if fit.coefficients.len() != k {
        return Err(StatsError::Domain("fit and design have different columns".into()));
    }
    let fixed: Vec<&str> = std::iter::once(focal).chain(by).collect();
    for f in &fixed {
        if !design.factors.contains_key(*f) {
            return Err(StatsError::UnknownFactor(f.to_string()));
        }
    }
    // Mean of the free part of each column.
    let n = design.n() as f64;
    let mut free_mean = Vec::with_capacity(k);
    for c in &design.columns {
        let free: Vec<&Term> = c
            .terms
            .iter()
            .filter(|t| !matches!(t, Term::Level { factor, .. } if fixed.contains(&factor.as_str())))
            .collect();
        if free.len() == c.terms.len() && !c.terms.is_empty() {
            free_mean.push(c.values.iter().sum::<f64>() / n);
            continue;
        }
        let mut product = vec![1.0; design.n()];
        for t in free {
            for (p, v) in product.iter_mut().zip(design.term_values(t)?) {
                *p *= v;
            }
        }
        free_mean.push(product.iter().sum::<f64>() / n);
    }

    let levels = |f: &str| design.factors[f].levels.clone();
    let by_levels: Vec<Option<String>> = match by {
        Some(b) => levels(b).into_iter().map(Some).collect(),
        None => vec![None],
    };
    let beta = fit.beta();
    let mut out = Vec::new();
    for by_level in &by_levels {
        for level in levels(focal) {
            let x: Vec<f64> = design
                .columns
                .iter()
                .zip(&free_mean)
                .map(|(c, m)| {
                    let indicator = c.terms.iter().all(|t| match t {
                        Term::Level { factor, level: l } if factor == focal => *l == level,
                        Term::Level { factor, level: l } if Some(factor.as_str()) == by => {
                            Some(l) == by_level.as_ref()
                        }
                        _ => true,
                    });
                    if indicator {
                        *m
                    } else {
                        0.0
                    }
                })
                .collect();
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mut var = 0.0;
            for i in 0..k {
                for j in 0..k {
                    var += x[i] * fit.vcov[i][j] * x[j];
                }
            }
            let se = var.max(0.0).sqrt();
            let (lo, hi) = (eta - Z95 * se, eta + Z95 * se);
            let (estimate, ci_lo, ci_hi) = match fit.link {
                Link::Identity => (eta, lo, hi),
                Link::Logit => (sigmoid(eta), sigmoid(lo), sigmoid(hi)),
            };
            out.push(MemPoint {
                factor: focal.to_string(),
                level,
                by_factor: by.map(String::from),
                by_level: by_level.clone(),
                estimate,
                ci_lo,
                ci_hi,
                se_link: se,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::design::tests::synthetic_table;
    use crate::stats::{build_design, fit_firth_logit, fit_ols, ModelKind, ModelSpec};

    fn eq_table() -> crate::table::AnalysisTable {
        synthetic_table(60, 5, |t| {
            let base = 40 + (t.temperature * 20.0) as u8;
            base + t.ethnicity as u8 * 3 + u8::from(t.gender == crate::identity::Gender::Female) * 2
        })
    }

    #[test]
    fn level_differences_equal_dummy_coefficients() {
        let design = build_design(&eq_table(), &ModelSpec::new(ModelKind::Eq2)).unwrap();
        let fit = fit_ols(&design).unwrap();
        let mem = marginal_effects_at_mean(&fit, &design, "ethnicity", None).unwrap();
        let base = mem.iter().find(|m| m.level == "Dutch").unwrap().estimate;
        for m in mem.iter().filter(|m| m.level != "Dutch") {
            let b = fit.coef(&format!("ethnicity={}", m.level)).unwrap();
            assert!((m.estimate - base - b).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_mem_is_counterfactual_average_prediction() {
        let design = build_design(&eq_table(), &ModelSpec::new(ModelKind::Eq2)).unwrap();
        let fit = fit_ols(&design).unwrap();
        let mem = marginal_effects_at_mean(&fit, &design, "ethnicity", None).unwrap();
        let beta = fit.beta();
        for m in &mem {
            let mut total = 0.0;
            for i in 0..design.n() {
                for (j, c) in design.columns.iter().enumerate() {
                    let v = if c.label.starts_with("ethnicity=") {
                        f64::from(u8::from(c.label == format!("ethnicity={}", m.level)))
                    } else {
                        c.values[i]
                    };
                    total += v * beta[j];
                }
            }
            let avg = total / design.n() as f64;
            assert!((m.estimate - avg).abs() < 1e-9, "{} {} {}", m.level, m.estimate, avg);
            assert!(m.ci_lo < m.estimate && m.estimate < m.ci_hi);
        }
    }

    #[test]
    fn two_group_model_returns_group_means() {
        let table = synthetic_table(20, 2, |t| if t.ethnicity == crate::identity::Ethnicity::Turkish { 50 } else { 70 });
        let mut spec = ModelSpec::new(ModelKind::Eq1);
        spec.temperature = crate::stats::TemperatureEncoding::Continuous;
        let design = build_design(&table, &spec).unwrap();
        // Drop temperature to leave intercept plus ethnicity dummies.
        let cols: Vec<_> = design.columns.iter().filter(|c| c.label != "temperature").cloned().collect();
        let design = crate::stats::DesignMatrix { columns: cols, ..design };
        let fit = fit_ols(&design).unwrap();
        let mem = marginal_effects_at_mean(&fit, &design, "ethnicity", None).unwrap();
        for m in &mem {
            let expected = if m.level == "Turkish" { 50.0 } else { 70.0 };
            assert!((m.estimate - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn by_grid_and_logit_scale() {
        let table = eq_table();
        let design = build_design(&table, &ModelSpec::new(ModelKind::Eq3)).unwrap();
        let y: Vec<f64> = design.response.iter().map(|s| f64::from(u8::from(*s >= 60.0))).collect();
        let design = design.with_response(y);
        let fit = fit_firth_logit(&design).unwrap();
        let mem = marginal_effects_at_mean(&fit, &design, "ethnicity", Some("gender")).unwrap();
        assert_eq!(mem.len(), 18);
        for m in &mem {
            assert!(m.estimate > 0.0 && m.estimate < 1.0);
            assert!(m.ci_lo <= m.estimate && m.estimate <= m.ci_hi);
        }
        assert!(marginal_effects_at_mean(&fit, &design, "nonsense", None).is_err());
    }
}
