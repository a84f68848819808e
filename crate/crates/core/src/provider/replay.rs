use std::collections::HashMap;
use std::path::Path;

use super::{Backend, BackendError, ProviderError, Provenance, ScoreRequest};
use crate::design::Trial;
use crate::store::{Observation, RunLog};

/// Returns the raw responses stored in an earlier run log.
pub struct ReplayBackend {
    model_id: String,
    by_trial: HashMap<String, Observation>,
}

impl ReplayBackend {
    pub fn open(log: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let (manifest, observations) = RunLog::read(log)?;
        Ok(ReplayBackend {
            model_id: manifest.model_id,
            by_trial: observations
                .into_iter()
                .map(|o| (o.trial_id.clone(), o))
                .collect(),
        })
    }
}

impl Backend for ReplayBackend {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn score(&self, request: &ScoreRequest<'_>) -> Result<String, BackendError> {
        let obs = self.by_trial.get(&request.trial.trial_id).ok_or_else(|| {
            BackendError::Fatal(format!("trial {} is not in the replay log", request.trial.trial_id))
        })?;
        obs.raw_response
            .clone()
            .ok_or_else(|| BackendError::Transient("recorded transport failure".into()))
    }

    fn provenance(&self, trial: &Trial) -> Option<Provenance> {
        self.by_trial.get(&trial.trial_id).map(|o| Provenance {
            model_id: o.model_id.clone(),
            timestamp: o.timestamp.clone(),
            attempt_count: o.attempt_count,
        })
    }
}
