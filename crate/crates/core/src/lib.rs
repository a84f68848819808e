//! Correspondence-audit harness for name-based bias in automated CV screening.
//!
//! The pipeline mirrors a classic field audit: a corpus of vacancies and
//! matched CV templates is crossed with a 9 × 2 grid of ethnic and gender
//! identities signalled through candidate names ([`design`]). Each trial is
//! rendered into an isolated screening prompt ([`prompting`]), scored by a
//! pluggable backend ([`provider`]) and persisted to an append-only log
//! ([`store`]). The [`stats`] module then estimates discrimination with OLS
//! plus wild cluster bootstrap inference, multiple-testing corrections,
//! Firth-penalized logit threshold sweeps and discrimination ratios, and
//! [`report`] renders the figure and table analogs.

pub mod corpus;
pub mod design;
pub mod digest;
pub mod identity;
pub mod prompting;
pub mod provider;
pub mod report;
pub mod stats;
pub mod store;
pub mod table;

pub use corpus::{load_corpus, Corpus, CorpusConfig, CorpusError, CvTemplate, NameEntry, Vacancy};
pub use design::{build_plan, DesignError, ExperimentPlan, TemperatureScheme, Trial};
pub use identity::{Ethnicity, Gender};
pub use prompting::{parse_score, render_prompt, PromptText, ScoreParseOutcome};
pub use provider::{BiasModel, ProviderConfig, ProviderError};
pub use stats::{
    adjust_pvalues, build_design, discrimination_ratio, fit_firth_logit, fit_ols,
    marginal_effects_at_mean, threshold_sweep, welch_t, wild_cluster_bootstrap, AdjustMethod,
    DesignMatrix, FitResult, ModelSpec, StatsError, SweepResult,
};
pub use store::{Observation, RunLog, StoreError};
pub use table::{AnalysisRow, AnalysisTable};
