use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMethod {
    /// Holm step-down, controls the family-wise error rate.
    Holm,
    /// Benjamini-Hochberg step-up, controls the false discovery rate.
    Bh,
    /// Benjamini-Yekutieli, FDR under arbitrary dependence.
    By,
}

impl fmt::Display for AdjustMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjustMethod::Holm => "holm",
            AdjustMethod::Bh => "bh",
            AdjustMethod::By => "by",
        })
    }
}

impl FromStr for AdjustMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "holm" => Ok(AdjustMethod::Holm),
            "bh" | "fdr" => Ok(AdjustMethod::Bh),
            "by" => Ok(AdjustMethod::By),
            other => Err(format!("unknown adjustment method {other:?} (holm, bh, by)")),
        }
    }
}

/// Which coefficients form the multiple-testing family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Every term touching ethnicity or gender, interactions included.
    #[default]
    Identity,
    /// Every coefficient except the intercept.
    AllSlopes,
}

impl Family {
    pub fn contains(self, label: &str) -> bool {
        match self {
            Family::Identity => label.contains("ethnicity=") || label.contains("gender="),
            Family::AllSlopes => label != "(intercept)",
        }
    }
}

/// Adjusted p-values in input order, each capped at 1.
pub fn adjust_pvalues(p: &[f64], method: AdjustMethod) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::InvalidPValue(bad));
    }
    let m = p.len();
    if m == 0 {
        return Ok(vec![]);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    match method {
        AdjustMethod::Holm => {
            let mut running = 0.0f64;
            for (rank, &i) in order.iter().enumerate() {
                running = running.max((m - rank) as f64 * p[i]).min(1.0);
                out[i] = running;
            }
        }
        AdjustMethod::Bh | AdjustMethod::By => {
            let harmonic = if method == AdjustMethod::By {
                (1..=m).map(|i| 1.0 / i as f64).sum()
            } else {
                1.0
            };
            let mut running = 1.0f64;
            for (rank, &i) in order.iter().enumerate().rev() {
                let v = p[i] * m as f64 * harmonic / (rank + 1) as f64;
                running = running.min(v).min(1.0);
                out[i] = running;
            }
        }
    }
    Ok(out)
}
