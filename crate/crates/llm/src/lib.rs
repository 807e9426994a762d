//! Chat-completion gateway for the three LLM roles: the target generator,
//! the predicate matcher and the paraphraser. Every interaction is keyed by
//! a digest of its inputs and can be served from an on-disk cache or from
//! recorded fixtures for offline replay.

mod cache;
mod endpoint;
mod prompt;

use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use aspbench_core::syntax::{PredicateMapping, Program, UnparseableMapping};
use thiserror::Error;
use tracing::{debug, warn};

pub use cache::{cache_key, PromptCache, PromptRecord};
pub use endpoint::{EndpointKind, LlmEndpoint, DEFAULT_TEMPERATURE};
pub use prompt::{clean_program, generator_prompt, matcher_prompt, paraphrase_prompt, Role, Stage};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed completion response: {0}")]
    InvalidResponse(String),
    #[error("empty response")]
    EmptyResponse,
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("no {role} fixture for key {key}")]
    MissingFixture { role: Role, key: String },
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("cache error: {0}")]
    Cache(#[from] io::Error),
}

/// Reply of the predicate matcher: the parsed mapping, or the reason it
/// could not be parsed, plus the interaction record.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub mapping: Result<PredicateMapping, UnparseableMapping>,
    pub record: PromptRecord,
}

impl PromptRecord {
    /// Record for `raw` as a reply to `rendered_prompt`, with the key and
    /// the cleaned response derived the same way the gateway derives them.
    pub fn new(endpoint: &LlmEndpoint, role: Role, rendered_prompt: String, run_index: u32, raw: String) -> Self {
        let cache_key = cache_key(
            role,
            &rendered_prompt,
            &endpoint.model_name,
            endpoint.temperature,
            run_index,
        );
        let response_clean = match role {
            Role::Generator => clean_program(&raw),
            Role::Matcher | Role::Paraphraser => raw.trim().to_string(),
        };
        PromptRecord {
            role,
            model_name: endpoint.model_name.clone(),
            temperature: endpoint.temperature,
            run_index,
            rendered_prompt,
            response_raw: raw,
            response_clean,
            cache_key,
        }
    }
}

pub struct Gateway {
    endpoint: LlmEndpoint,
    cache: Option<PromptCache>,
    agent: ureq::Agent,
    requests: AtomicUsize,
    next_slot: Mutex<Instant>,
}

impl Gateway {
    pub fn new(endpoint: LlmEndpoint, cache: Option<PromptCache>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.request_timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Gateway {
            endpoint,
            cache,
            agent,
            requests: AtomicUsize::new(0),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }

    /// Completions fetched from the endpoint or the fixtures, as opposed to
    /// served from the cache. Retries count once.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn generate_program(&self, description: &str, run_index: u32) -> Result<PromptRecord, LlmError> {
        if description.trim().is_empty() {
            return Err(LlmError::EmptyInput("description"));
        }
        self.complete(Role::Generator, generator_prompt(description), run_index)
    }

    pub fn match_predicates(
        &self,
        gold: &Program,
        candidate: &Program,
        run_index: u32,
    ) -> Result<MatchOutcome, LlmError> {
        if gold.is_empty() {
            return Err(LlmError::EmptyInput("gold program"));
        }
        if candidate.is_empty() {
            return Err(LlmError::EmptyInput("candidate program"));
        }
        let record = self.complete(
            Role::Matcher,
            matcher_prompt(&gold.to_source(), &candidate.to_source()),
            run_index,
        )?;
        Ok(MatchOutcome {
            mapping: PredicateMapping::parse_reply(&record.response_clean),
            record,
        })
    }

    /// One paraphrasing stage. The first stage takes the original
    /// description, the second takes the first paraphrase.
    pub fn paraphrase(&self, text: &str, stage: Stage) -> Result<PromptRecord, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::EmptyInput("description"));
        }
        self.complete(Role::Paraphraser, paraphrase_prompt(text, stage), 0)
    }

    /// The shipped paraphrase when there is one, without touching the
    /// endpoint; otherwise a fresh paraphrase of `text`.
    pub fn paraphrase_or_shipped(&self, shipped: Option<&str>, text: &str, stage: Stage) -> Result<String, LlmError> {
        match shipped {
            Some(s) if !s.trim().is_empty() => Ok(s.to_string()),
            _ => Ok(self.paraphrase(text, stage)?.response_clean),
        }
    }

    fn complete(&self, role: Role, rendered_prompt: String, run_index: u32) -> Result<PromptRecord, LlmError> {
        let e = &self.endpoint;
        let key = cache_key(role, &rendered_prompt, &e.model_name, e.temperature, run_index);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                debug!(%role, %key, "cache hit");
                return Ok(hit);
            }
        }
        let raw = match e.kind {
            EndpointKind::Live => self.post(&rendered_prompt)?,
            EndpointKind::Replay => {
                PromptCache::new(&e.base_url)
                    .get(&key)?
                    .ok_or_else(|| LlmError::MissingFixture { role, key: key.clone() })?
                    .response_raw
            }
        };
        self.requests.fetch_add(1, Ordering::Relaxed);
        let record = PromptRecord::new(e, role, rendered_prompt, run_index, raw);
        if record.response_clean.is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        if let Some(cache) = &self.cache {
            cache.put(&record)?;
        }
        Ok(record)
    }

    fn post(&self, prompt: &str) -> Result<String, LlmError> {
        let e = &self.endpoint;
        let auth = match &e.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let url = format!("{}/chat/completions", e.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": e.model_name,
            "temperature": e.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut attempt = 0;
        loop {
            self.wait_for_slot();
            let mut req = self.agent.post(&url);
            if let Some(key) = &auth {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let err = match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| LlmError::Transport(e.to_string()))?;
                    if status == 200 {
                        return completion_text(&text);
                    }
                    LlmError::Http { status, body: text }
                }
                Err(err) => LlmError::Transport(err.to_string()),
            };
            let retryable = match &err {
                LlmError::Http { status, .. } => *status == 429 || *status >= 500,
                LlmError::Transport(_) => true,
                _ => false,
            };
            if !retryable || attempt >= e.max_retries {
                return Err(err);
            }
            let delay = e.retry_backoff() * 2u32.saturating_pow(attempt);
            warn!(attempt, ?delay, "retrying after {err}");
            thread::sleep(delay);
            attempt += 1;
        }
    }

    fn wait_for_slot(&self) {
        let interval = self.endpoint.min_interval();
        if interval.is_zero() {
            return;
        }
        let mut next = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
        let now = Instant::now();
        if *next > now {
            thread::sleep(*next - now);
        }
        *next = Instant::now() + interval;
    }
}

fn completion_text(body: &str) -> Result<String, LlmError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::InvalidResponse(format!("no choices[0].message.content in {body}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_text_extracts_the_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"a."}},{"message":{"content":"b."}}]}"#;
        assert_eq!(completion_text(body).unwrap(), "a.");
        assert!(matches!(
            completion_text(r#"{"choices":[]}"#),
            Err(LlmError::InvalidResponse(_))
        ));
        assert!(matches!(completion_text("<html>"), Err(LlmError::InvalidResponse(_))));
    }
}
