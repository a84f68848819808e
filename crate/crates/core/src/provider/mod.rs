//! Scoring backends and the concurrent run loop.
//!
//! A [`Backend`] turns one rendered prompt into raw response text. The
//! runner handles concurrency, rate limiting, retries, parsing and ordered
//! persistence, so backends stay small.

mod bias;
mod http;
mod replay;
mod runner;
mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bias::{BiasModel, GroupShift, InteractionShift, Move, Rung, REFERENCE_PENALTIES};
pub use http::HttpBackend;
pub use replay::ReplayBackend;
pub use runner::{run_plan, AttemptRecord, RunContext, RunSummary};
pub use synthetic::SyntheticBackend;

use crate::corpus::Vacancy;
use crate::design::Trial;
use crate::digest::sha256_hex;
use crate::prompting::{PromptError, PromptText};
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("run aborted at trial {trial_id}: {message}")]
    Fatal { trial_id: String, message: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Failure of a single request.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    /// Retrying cannot help: authentication, malformed requests.
    #[error("fatal: {0}")]
    Fatal(String),
}

pub struct ScoreRequest<'a> {
    pub trial: &'a Trial,
    pub vacancy: &'a Vacancy,
    pub prompt: &'a PromptText,
    /// 1-based attempt number within the trial's budget.
    pub attempt: u32,
}

/// Metadata a backend can supply to reproduce an earlier observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub model_id: String,
    pub timestamp: String,
    pub attempt_count: u32,
}

pub trait Backend: Send + Sync {
    fn model_id(&self) -> String;
    fn score(&self, request: &ScoreRequest<'_>) -> Result<String, BackendError>;
    fn provenance(&self, _trial: &Trial) -> Option<Provenance> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http {
        endpoint: String,
        model: String,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Synthetic {
        #[serde(default)]
        bias: BiasModel,
        seed: u64,
    },
    Replay {
        log: PathBuf,
    },
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Budget shared by transport retries and unparseable responses.
    pub max_attempts: u32,
    /// Wait before retry `i` (the last entry repeats).
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: vec![500, 2000, 8000],
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> std::time::Duration {
        let i = (attempt.saturating_sub(1) as usize).min(self.backoff_ms.len().saturating_sub(1));
        std::time::Duration::from_millis(self.backoff_ms.get(i).copied().unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub backend: BackendConfig,
    #[serde(default = "one")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Requests per second across all workers; unlimited when absent.
    #[serde(default)]
    pub rate_limit: Option<f64>,
}

fn one() -> usize {
    1
}

impl ProviderConfig {
    pub fn synthetic(bias: BiasModel, seed: u64) -> Self {
        ProviderConfig {
            backend: BackendConfig::Synthetic { bias, seed },
            max_in_flight: 1,
            retry: RetryPolicy::default(),
            rate_limit: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(ProviderError::Config("retry.max_attempts must be at least 1".into()));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0) {
                return Err(ProviderError::Config("rate_limit must be positive".into()));
            }
        }
        if let BackendConfig::Synthetic { bias, .. } = &self.backend {
            bias.validate()?;
        }
        Ok(())
    }

    /// Stable hash of the configuration, recorded in the run manifest.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>, ProviderError> {
        self.validate()?;
        Ok(match &self.backend {
            BackendConfig::Http {
                endpoint,
                model,
                api_key_env,
                timeout_secs,
            } => Box::new(HttpBackend::new(
                endpoint,
                model,
                api_key_env.as_deref(),
                std::time::Duration::from_secs(*timeout_secs),
            )?),
            BackendConfig::Synthetic { bias, seed } => {
                Box::new(SyntheticBackend::new(bias.clone(), *seed)?)
            }
            BackendConfig::Replay { log } => Box::new(ReplayBackend::open(log)?),
        })
    }
}
