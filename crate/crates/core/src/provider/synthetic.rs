use super::{Backend, BackendError, BiasModel, ProviderError, ScoreRequest};
use crate::digest::seeded_rng;

/// Draws scores from a [`BiasModel`]. Each (trial, attempt) has its own
/// random stream, so results do not depend on scheduling.
pub struct SyntheticBackend {
    model: BiasModel,
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(model: BiasModel, seed: u64) -> Result<Self, ProviderError> {
        model.validate()?;
        Ok(SyntheticBackend { model, seed })
    }
}

impl Backend for SyntheticBackend {
    fn model_id(&self) -> String {
        "synthetic".to_string()
    }

    fn score(&self, request: &ScoreRequest<'_>) -> Result<String, BackendError> {
        let mut rng = seeded_rng(
            self.seed,
            &format!("{}/score/{}", request.trial.seed_path, request.attempt),
        );
        Ok(self
            .model
            .synthetic_score(request.trial, request.vacancy, &mut rng)
            .to_string())
    }
}
