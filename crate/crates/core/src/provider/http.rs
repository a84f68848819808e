use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, ProviderError, ScoreRequest};

/// Chat-completion endpoint. Each trial is a single-message conversation
/// with no history.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key_env: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProviderError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
        })
    }

    pub fn request_body(&self, request: &ScoreRequest<'_>) -> Value {
        json!({
            "model": self.model,
            "temperature": request.trial.temperature,
            "messages": [{"role": "user", "content": request.prompt.rendered}],
        })
    }
}

fn classify_status(status: u16, body: &str) -> BackendError {
    let detail = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    match status {
        429 | 500..=599 => BackendError::Transient(detail),
        _ => BackendError::Fatal(detail),
    }
}

impl Backend for HttpBackend {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn score(&self, request: &ScoreRequest<'_>) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(request))
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Transient(format!("malformed response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| BackendError::Transient("response has no choices[0].message.content".into()))
    }
}
