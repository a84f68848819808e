//! Estimation engine: model builders, OLS with wild cluster bootstrap
//! inference, multiple-testing corrections, Welch tests, Firth logit
//! threshold sweeps and discrimination ratios.

mod adjust;
mod bootstrap;
pub(crate) mod design;
mod firth;
mod mem;
mod ols;
mod ratio;
mod sweep;
mod welch;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adjust::{adjust_pvalues, AdjustMethod, Family};
pub use bootstrap::{cr1_vcov, wild_cluster_bootstrap, BootstrapOptions, BootstrapResult, PValueMethod};
pub use design::{
    build_design, Column, ColumnKind, DesignMatrix, Encoding, FactorInfo, ModelKind, ModelSpec,
    TemperatureEncoding, Term,
};
pub use firth::{fit_firth_logit, fit_firth_logit_with, fit_logit_mle, FirthOptions};
pub use mem::{marginal_effects_at_mean, MemPoint};
pub use ols::fit_ols;
pub use ratio::{discrimination_ratio, discrimination_ratio_ci, odds_ratio};
pub use sweep::{threshold_sweep, SweepOptions, SweepResult, SweepRow, OTHER_GROUP};
pub use welch::{welch_t, WelchResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("design is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("factor `{factor}` has no level `{level}`")]
    UnknownLevel { factor: String, level: String },
    #[error("unknown factor or covariate `{0}`")]
    UnknownFactor(String),
    #[error("design has no rows")]
    EmptyDesign,
    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),
    #[error("at least 100 bootstrap replications are required, got {0}")]
    TooFewReplications(usize),
    #[error("wild cluster bootstrap needs at least two clusters")]
    SingleCluster,
    #[error("Firth logit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("logit response must be 0/1, found {0}")]
    NonBinaryResponse(f64),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logit,
}

/// How the reported standard errors were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    /// OLS homoskedastic or inverse-information SEs.
    ModelBased,
    WildClusterBootstrap,
    Cr1,
}

/// Estimates keyed by column label, in design order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub estimator: String,
    pub link: Link,
    pub coefficients: IndexMap<String, f64>,
    pub se: IndexMap<String, f64>,
    pub se_kind: SeKind,
    pub p_raw: IndexMap<String, f64>,
    /// Adjusted p-values for the coefficients in the testing family.
    #[serde(default)]
    pub p_adjusted: IndexMap<String, f64>,
    #[serde(default)]
    pub adjust_method: Option<AdjustMethod>,
    /// Coefficient covariance behind `se`, row-major `k × k`.
    pub vcov: Vec<Vec<f64>>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub fitted: Vec<f64>,
    pub r2: f64,
    pub r2_adj: f64,
    pub aic: f64,
    pub bic: f64,
    pub log_likelihood: f64,
    pub n: usize,
    pub bootstrap_replications: usize,
    #[serde(default)]
    pub iterations: usize,
}

impl FitResult {
    pub fn coef(&self, label: &str) -> Option<f64> {
        self.coefficients.get(label).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.coefficients.keys().map(String::as_str)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.values().copied().collect()
    }

    /// Replace SEs, p-values and covariance with bootstrap output.
    pub fn apply_bootstrap(&mut self, boot: &BootstrapResult) {
        let labels: Vec<String> = self.coefficients.keys().cloned().collect();
        for (i, label) in labels.iter().enumerate() {
            self.se.insert(label.clone(), boot.se[i]);
            self.p_raw.insert(label.clone(), boot.p_raw[i]);
        }
        self.vcov = boot.vcov.clone();
        self.se_kind = SeKind::WildClusterBootstrap;
        self.bootstrap_replications = boot.replications;
        self.p_adjusted.clear();
        self.adjust_method = None;
    }

    /// Adjust the p-values of the coefficients selected by `family`.
    pub fn adjust(&mut self, method: AdjustMethod, family: Family) -> Result<(), StatsError> {
        let members: Vec<String> = self.labels().filter(|l| family.contains(l)).map(String::from).collect();
        let raw: Vec<f64> = members.iter().map(|l| self.p_raw[l.as_str()]).collect();
        let adjusted = adjust_pvalues(&raw, method)?;
        self.p_adjusted = members.into_iter().zip(adjusted).collect();
        self.adjust_method = Some(method);
        Ok(())
    }
}

/// Two-sided standard normal tail probability.
pub(crate) fn normal_two_sided(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if !z.is_finite() {
        return if z.is_nan() { 1.0 } else { 0.0 };
    }
    let n = Normal::standard();
    (2.0 * n.cdf(-z.abs())).clamp(0.0, 1.0)
}

pub(crate) const Z95: f64 = 1.959_963_984_540_054;
