//! HTTP transport contract, clocks, and the record/replay fixture store.
//!
//! Connectors never talk to the network directly: they build an
//! [`HttpRequest`] and hand it to a [`Transport`]. Replay mode serves
//! responses from `fixtures/<source>/<sha256 of request>.json`; record mode
//! performs the live request and writes that file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::series::Source;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Live,
    Replay,
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "POST")]
    Post,
}

/// A request as built by a connector. Secret query parameters (API keys)
/// are sent but never hashed or written to fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub source: Source,
    pub method: Method,
    pub url: String,
    pub query: Vec<(String, String)>,
    pub secret_query: Vec<(String, String)>,
    pub body: Option<String>,
}

impl HttpRequest {
    pub fn get(source: Source, url: impl Into<String>) -> Self {
        Self {
            source,
            method: Method::Get,
            url: url.into(),
            query: Vec::new(),
            secret_query: Vec::new(),
            body: None,
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.query.push((key.into(), value.into()));
        self
    }

    pub fn secret(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.secret_query.push((key.into(), value.into()));
        self
    }

    pub fn summary(&self) -> RequestSummary {
        RequestSummary {
            source: self.source,
            method: self.method,
            url: self.url.clone(),
            query: self.query.clone(),
            body: self.body.clone(),
        }
    }

    /// Hex SHA-256 of the canonical summary; the fixture file stem.
    pub fn fixture_key(&self) -> String {
        let canonical = serde_json::to_string(&self.summary()).expect("summary serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Everything about a request that is safe to persist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub source: Source,
    pub method: Method,
    pub url: String,
    pub query: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("no recorded fixture at {0}")]
    FixtureMissing(PathBuf),
    #[error("fixture i/o error: {0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Fixture file layout: request summary plus the raw response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub request: RequestSummary,
    pub status: u16,
    pub body: String,
}

pub fn fixture_path(dir: &Path, request: &HttpRequest) -> PathBuf {
    dir.join(request.source.as_str().to_ascii_lowercase())
        .join(format!("{}.json", request.fixture_key()))
}

pub fn write_fixture(
    dir: &Path,
    request: &HttpRequest,
    response: &HttpResponse,
) -> Result<PathBuf, TransportError> {
    let path = fixture_path(dir, request);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| TransportError::Io(e.to_string()))?;
    }
    let fixture = Fixture {
        request: request.summary(),
        status: response.status,
        body: response.body.clone(),
    };
    let text = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
    fs::write(&path, text + "\n").map_err(|e| TransportError::Io(e.to_string()))?;
    Ok(path)
}

/// Serves responses from the fixture store only.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let path = fixture_path(&self.dir, request);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(TransportError::FixtureMissing(path))
            }
            Err(e) => return Err(TransportError::Io(e.to_string())),
        };
        let fixture: Fixture = serde_json::from_str(&text)
            .map_err(|e| TransportError::Io(format!("{}: {e}", path.display())))?;
        Ok(HttpResponse {
            status: fixture.status,
            body: fixture.body,
        })
    }
}

/// Blocking HTTP client.
pub struct LiveTransport {
    client: reqwest::blocking::Client,
}

impl LiveTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .user_agent(concat!("shiftminer/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for LiveTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = match request.method {
            Method::Get => self.client.get(&request.url),
            Method::Post => self.client.post(&request.url),
        };
        builder = builder
            .query(&request.query)
            .query(&request.secret_query);
        if let Some(body) = &request.body {
            builder = builder
                .header("content-type", "application/json")
                .body(body.clone());
        }
        let response = builder
            .send()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Live requests whose responses are also written to the fixture store.
pub struct RecordTransport<T: Transport> {
    inner: T,
    dir: PathBuf,
}

impl<T: Transport> RecordTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }
}

impl<T: Transport> Transport for RecordTransport<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let response = self.inner.send(request)?;
        write_fixture(&self.dir, request, &response)?;
        Ok(response)
    }
}

pub fn make_transport(
    mode: TransportMode,
    fixtures_dir: &Path,
) -> Result<Arc<dyn Transport>, TransportError> {
    Ok(match mode {
        TransportMode::Replay => Arc::new(ReplayTransport::new(fixtures_dir)),
        TransportMode::Live => Arc::new(LiveTransport::new()?),
        TransportMode::Record => Arc::new(RecordTransport::new(LiveTransport::new()?, fixtures_dir)),
    })
}

/// Time source used for pacing and backoff.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Clock that advances only when slept on; records every sleep.
#[derive(Debug, Default)]
pub struct VirtualClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().expect("clock lock").1.clone()
    }

    pub fn advance(&self, by: Duration) {
        self.state.lock().expect("clock lock").0 += by;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        self.state.lock().expect("clock lock").0
    }

    fn sleep(&self, duration: Duration) {
        let mut state = self.state.lock().expect("clock lock");
        state.0 += duration;
        state.1.push(duration);
    }
}
