use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    /// Chat-completions POST to `base_url`.
    Live,
    /// Recorded `PromptRecord` files; `base_url` is the fixtures directory.
    Replay,
}

/// Connection settings for one model. The API key itself is read from the
/// environment variable named by `api_key_env` at request time and is never
/// stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmEndpoint {
    pub kind: EndpointKind,
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Minimum spacing between requests; 0 disables rate limiting.
    #[serde(default)]
    pub min_interval_ms: u64,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_retries() -> u32 {
    3
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_backoff_ms() -> u64 {
    1000
}

impl LlmEndpoint {
    pub fn live(base_url: impl Into<String>, model_name: impl Into<String>, api_key_env: Option<String>) -> Self {
        LlmEndpoint {
            kind: EndpointKind::Live,
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env,
            temperature: DEFAULT_TEMPERATURE,
            max_retries: default_retries(),
            request_timeout_secs: default_timeout_secs(),
            retry_backoff_ms: default_backoff_ms(),
            min_interval_ms: 0,
        }
    }

    pub fn replay(fixtures: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmEndpoint {
            kind: EndpointKind::Replay,
            api_key_env: None,
            ..LlmEndpoint::live(fixtures, model_name, None)
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn retry_backoff(&self) -> Duration {
        Duration::from_millis(self.retry_backoff_ms)
    }

    pub fn min_interval(&self) -> Duration {
        Duration::from_millis(self.min_interval_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply_when_fields_are_omitted() {
        let e: LlmEndpoint = serde_json::from_str(r#"{"kind":"live","base_url":"http://x","model_name":"m"}"#).unwrap();
        assert_eq!(e, LlmEndpoint::live("http://x", "m", None));
        assert_eq!(e.temperature, 0.7);
    }

    #[test]
    fn serialized_endpoint_names_the_variable_not_the_key() {
        let e = LlmEndpoint::live("http://x", "m", Some("ASPBENCH_TEST_KEY".into()));
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("ASPBENCH_TEST_KEY"));
        assert!(!json.to_lowercase().contains("bearer"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<LlmEndpoint, _> =
            serde_json::from_str(r#"{"kind":"live","base_url":"x","model_name":"m","api_key":"secret"}"#);
        assert!(r.is_err());
    }
}
