//! Chat-completion backends.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde_json::{json, Value};

use super::BackendConfig;
use crate::error::{Error, Result};
use crate::prompts::PromptInstance;

/// Environment variable holding the API key for [`HttpBackend`].
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

static HTTP_DIALS: AtomicU64 = AtomicU64::new(0);

/// Number of outbound HTTP requests attempted by any [`HttpBackend`] in this process.
pub fn http_requests_attempted() -> u64 {
    HTTP_DIALS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: timeouts, 429, 5xx.
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendError::Transient(m) => write!(f, "transient: {m}"),
            BackendError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

/// One chat request per prompt; implementations hold no conversation state.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        prompt: &PromptInstance,
        config: &BackendConfig,
    ) -> std::result::Result<String, BackendError>;

    fn is_networked(&self) -> bool {
        false
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: String,
}

impl HttpBackend {
    pub fn new(api_key: impl Into<String>, config: &BackendConfig) -> Result<Self> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(Error::Config(format!("{API_KEY_ENV} is empty")));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(HttpBackend { client, api_key })
    }

    pub fn from_env(config: &BackendConfig) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| Error::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::new(key, config)
    }
}

pub fn request_body(prompt: &PromptInstance, config: &BackendConfig) -> Value {
    json!({
        "model": config.model_id,
        "temperature": config.temperature,
        "messages": [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": prompt.user_text},
        ],
    })
}

/// `choices[0].message.content` of a chat-completion reply.
pub fn extract_content(body: &Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        prompt: &PromptInstance,
        config: &BackendConfig,
    ) -> std::result::Result<String, BackendError> {
        HTTP_DIALS.fetch_add(1, Ordering::SeqCst);
        let resp = self
            .client
            .post(&config.endpoint)
            .bearer_auth(&self.api_key)
            .json(&request_body(prompt, config))
            .send()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!("HTTP {status}: {text}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| BackendError::Transient(format!("unreadable body: {e}")))?;
        extract_content(&body)
            .ok_or_else(|| BackendError::Fatal("reply has no choices[0].message.content".into()))
    }

    fn is_networked(&self) -> bool {
        true
    }
}

/// Offline backend serving `<content_hash>.txt` files from a directory.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    dir: PathBuf,
}

impl FixtureBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureBackend { dir: dir.into() }
    }

    pub fn fixture_path(dir: &Path, content_hash: &str) -> PathBuf {
        dir.join(format!("{content_hash}.txt"))
    }

    /// Write the canned reply for `prompt`.
    pub fn write_fixture(dir: &Path, prompt: &PromptInstance, reply: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = Self::fixture_path(dir, &prompt.content_hash);
        std::fs::write(&path, reply).map_err(|e| Error::io(path, e))
    }
}

impl ChatBackend for FixtureBackend {
    fn complete(
        &self,
        prompt: &PromptInstance,
        _config: &BackendConfig,
    ) -> std::result::Result<String, BackendError> {
        let path = Self::fixture_path(&self.dir, &prompt.content_hash);
        std::fs::read_to_string(&path).map_err(|e| {
            BackendError::Fatal(format!("no fixture {}: {e}", path.display()))
        })
    }
}

/// Backend driven by a closure.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&PromptInstance) -> std::result::Result<String, BackendError> + Send + Sync,
{
    fn complete(
        &self,
        prompt: &PromptInstance,
        _config: &BackendConfig,
    ) -> std::result::Result<String, BackendError> {
        (self.0)(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::prompts::PromptLibrary;

    #[test]
    fn body_shape() {
        let p = PromptLibrary::bundled()
            .render_public_figure(&Domain::parse("cnn.com").unwrap(), "Biden")
            .unwrap();
        let body = request_body(&p, &BackendConfig::default());
        assert_eq!(body["model"], "gpt-3.5-turbo-0125");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], p.user_text.as_str());
    }

    #[test]
    fn content_extraction() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(extract_content(&body).as_deref(), Some("hi"));
        assert_eq!(extract_content(&json!({"choices": []})), None);
    }

    #[test]
    fn empty_key_rejected() {
        assert!(matches!(
            HttpBackend::new("  ", &BackendConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = PromptLibrary::bundled().render_summarize("article").unwrap();
        let backend = FixtureBackend::new(dir.path());
        assert!(matches!(
            backend.complete(&p, &BackendConfig::default()),
            Err(BackendError::Fatal(_))
        ));
        FixtureBackend::write_fixture(dir.path(), &p, "summary").unwrap();
        assert_eq!(backend.complete(&p, &BackendConfig::default()).unwrap(), "summary");
    }
}
