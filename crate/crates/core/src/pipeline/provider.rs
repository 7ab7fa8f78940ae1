//! Text-generation backends.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// One completion request. `task_key` and `kind` identify the call site so
/// replay providers can look up a recorded reply; `attempt` counts retries
/// from 0.
#[derive(Debug, Clone, Copy)]
pub struct ProviderRequest<'a> {
    pub task_key: &'a str,
    pub kind: &'a str,
    pub attempt: u32,
    pub prompt: &'a str,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no fixture for task `{task}` kind `{kind}`")]
    MissingFixture { task: String, kind: String },
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider reply could not be used: {0}")]
    BadReply(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// Replays recorded replies from `<dir>/<task_key>/<kind>.txt`. Retry
/// `n` reads `<kind>.<n>.txt` when it exists.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    dir: PathBuf,
}

impl FixtureProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureProvider { dir: dir.into() }
    }
}

impl Provider for FixtureProvider {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<String, ProviderError> {
        let task_dir = self.dir.join(req.task_key);
        let mut candidates = Vec::new();
        if req.attempt > 0 {
            candidates.push(task_dir.join(format!("{}.{}.txt", req.kind, req.attempt)));
        }
        candidates.push(task_dir.join(format!("{}.txt", req.kind)));
        for path in candidates {
            match fs::read_to_string(&path) {
                Ok(text) => return Ok(text),
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(ProviderError::MissingFixture { task: req.task_key.into(), kind: req.kind.into() })
    }
}

/// In-memory replies keyed by `(task_key, kind)`; the reply for attempt `n`
/// is entry `min(n, len - 1)`. Records every prompt it sees.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    replies: BTreeMap<(String, String), Vec<String>>,
    seen: Mutex<Vec<(String, String, u32, String)>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply(mut self, task_key: &str, kind: &str, replies: &[&str]) -> Self {
        self.replies.insert(
            (task_key.into(), kind.into()),
            replies.iter().map(|s| s.to_string()).collect(),
        );
        self
    }

    /// `(task_key, kind, attempt, prompt)` for every call so far.
    pub fn calls(&self) -> Vec<(String, String, u32, String)> {
        self.seen.lock().expect("poisoned").clone()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<String, ProviderError> {
        self.seen.lock().expect("poisoned").push((
            req.task_key.into(),
            req.kind.into(),
            req.attempt,
            req.prompt.into(),
        ));
        let replies = self
            .replies
            .get(&(req.task_key.to_string(), req.kind.to_string()))
            .filter(|r| !r.is_empty())
            .ok_or_else(|| ProviderError::MissingFixture {
                task: req.task_key.into(),
                kind: req.kind.into(),
            })?;
        Ok(replies[(req.attempt as usize).min(replies.len() - 1)].clone())
    }
}

/// Settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    120_000
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        let api_key = config.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        HttpProvider { config, agent, api_key }
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let mut request = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response =
            request.send_json(&body).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadReply("response has no choices[0].message.content".into()))
    }
}

/// Spaces calls to `inner` at least `min_interval` apart.
pub struct RateLimited<P> {
    inner: P,
    min_interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl<P> RateLimited<P> {
    pub fn new(inner: P, min_interval: Duration) -> Self {
        RateLimited { inner, min_interval, next_slot: Mutex::new(None) }
    }
}

impl<P: Provider> Provider for RateLimited<P> {
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<String, ProviderError> {
        let wait = {
            let mut slot = self.next_slot.lock().expect("poisoned");
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + self.min_interval);
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        self.inner.complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(task: &'a str, kind: &'a str, attempt: u32) -> ProviderRequest<'a> {
        ProviderRequest { task_key: task, kind, attempt, prompt: "p" }
    }

    #[test]
    fn fixture_lookup_and_retries() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("t1")).unwrap();
        fs::write(dir.path().join("t1/statement.txt"), "first").unwrap();
        fs::write(dir.path().join("t1/statement.2.txt"), "third").unwrap();
        let p = FixtureProvider::new(dir.path());
        assert_eq!(p.complete(&req("t1", "statement", 0)).unwrap(), "first");
        assert_eq!(p.complete(&req("t1", "statement", 1)).unwrap(), "first");
        assert_eq!(p.complete(&req("t1", "statement", 2)).unwrap(), "third");
        assert!(matches!(
            p.complete(&req("t1", "other", 0)),
            Err(ProviderError::MissingFixture { .. })
        ));
    }

    #[test]
    fn scripted_replies() {
        let p = ScriptedProvider::new().reply("t", "k", &["a", "b"]);
        assert_eq!(p.complete(&req("t", "k", 0)).unwrap(), "a");
        assert_eq!(p.complete(&req("t", "k", 5)).unwrap(), "b");
        assert_eq!(p.calls().len(), 2);
    }

    #[test]
    fn rate_limit_spaces_calls() {
        let p = RateLimited::new(ScriptedProvider::new().reply("t", "k", &["a"]), Duration::from_millis(30));
        let start = Instant::now();
        for _ in 0..3 {
            p.complete(&req("t", "k", 0)).unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(60));
    }

    #[test]
    fn http_provider_reports_transport_errors() {
        let p = HttpProvider::new(HttpProviderConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key_env: None,
            temperature: None,
            timeout_ms: 2_000,
        });
        assert!(matches!(p.complete(&req("t", "k", 0)), Err(ProviderError::Transport(_))));
    }
}
