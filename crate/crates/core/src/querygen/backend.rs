//! Completion backends. Replay is the contract of record; the live adapter
//! speaks the OpenAI-compatible chat-completions protocol.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::QuerygenError;

pub const LLM_ENDPOINT_VAR: &str = "LLM_ENDPOINT";
pub const LLM_MODEL_VAR: &str = "LLM_MODEL";
pub const LLM_API_KEY_VAR: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendInfo {
    pub name: String,
    pub max_prompt_chars: usize,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, QuerygenError>;
    fn info(&self) -> BackendInfo;
}

/// Hex SHA-256 of the prompt text.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub fn completion_path(fixtures_dir: &Path, prompt: &str) -> PathBuf {
    fixtures_dir
        .join("llm")
        .join(format!("{}.txt", prompt_key(prompt)))
}

pub fn write_completion(fixtures_dir: &Path, prompt: &str, completion: &str) -> Result<PathBuf, QuerygenError> {
    let path = completion_path(fixtures_dir, prompt);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| QuerygenError::BackendFailure(e.to_string()))?;
    }
    fs::write(&path, completion).map_err(|e| QuerygenError::BackendFailure(e.to_string()))?;
    Ok(path)
}

/// Serves completions from `fixtures/llm/<sha256(prompt)>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: fixtures_dir.into(),
        }
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, prompt: &str) -> Result<String, QuerygenError> {
        let path = completion_path(&self.dir, prompt);
        fs::read_to_string(&path).map_err(|e| {
            QuerygenError::BackendFailure(format!("no completion fixture {}: {e}", path.display()))
        })
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "replay".into(),
            max_prompt_chars: usize::MAX,
        }
    }
}

pub struct LiveBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl LiveBackend {
    /// Reads `LLM_ENDPOINT` (full chat-completions URL), `LLM_MODEL` and
    /// `LLM_API_KEY`. Endpoint and model default to the OpenAI API.
    pub fn from_env() -> Result<Self, QuerygenError> {
        let get = |var| std::env::var(var).ok().filter(|v: &String| !v.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| QuerygenError::BackendFailure(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: get(LLM_ENDPOINT_VAR)
                .unwrap_or_else(|| "https://api.openai.com/v1/chat/completions".into()),
            model: get(LLM_MODEL_VAR).unwrap_or_else(|| "gpt-4".into()),
            api_key: get(LLM_API_KEY_VAR),
        })
    }
}

impl CompletionBackend for LiveBackend {
    fn complete(&self, prompt: &str) -> Result<String, QuerygenError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| QuerygenError::BackendFailure(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| QuerygenError::BackendFailure(e.to_string()))?;
        if !status.is_success() {
            return Err(QuerygenError::BackendFailure(format!("HTTP {status}")));
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| QuerygenError::BackendFailure(format!("bad response: {e}")))?;
        json.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| QuerygenError::BackendFailure("response has no message content".into()))
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: format!("live:{}", self.model),
            max_prompt_chars: 100_000,
        }
    }
}

/// Wraps a backend and stores every completion as a replay fixture.
pub struct RecordBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: CompletionBackend> RecordBackend<B> {
    pub fn new(inner: B, fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: fixtures_dir.into(),
        }
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordBackend<B> {
    fn complete(&self, prompt: &str) -> Result<String, QuerygenError> {
        let text = self.inner.complete(prompt)?;
        write_completion(&self.dir, prompt, &text)?;
        Ok(text)
    }

    fn info(&self) -> BackendInfo {
        self.inner.info()
    }
}
