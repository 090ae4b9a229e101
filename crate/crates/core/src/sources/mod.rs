//! Data-source connectors: FRED, EIA, Yahoo Finance and Google Trends.
//!
//! A [`Fetcher`] turns a validated [`SourceQuery`] into one or more
//! `Original`-stage series. Requests go through an injected [`Transport`]
//! with per-source pacing and exponential backoff on HTTP 429 / 5xx.

pub mod eia;
pub mod fred;
mod query;
pub mod transport;
pub mod trends;
pub mod yahoo;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::NaiveDate;
use thiserror::Error;

use crate::series::{series_id, Source, TimeSeries};

pub use query::{
    dedup_queries, validate_query, EiaQuery, FredQuery, QueryPayload, SourceQuery, TrendsQuery,
    YahooInterval, YahooQuery,
};
pub use transport::{
    fixture_path, write_fixture, Clock, HttpRequest, HttpResponse, LiveTransport, RecordTransport,
    ReplayTransport, SystemClock, Transport, TransportError, TransportMode, VirtualClock,
};

pub const FRED_KEY_VAR: &str = "FRED_API_KEY";
pub const EIA_KEY_VAR: &str = "EIA_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("missing credentials: set {0}")]
    AuthMissing(&'static str),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("upstream returned HTTP {status}")]
    UpstreamError { status: u16 },
    #[error("cannot parse response: {0}")]
    ParseError(String),
    #[error("no usable observations: {0}")]
    EmptyResult(String),
    #[error("invalid query: {}", .0.join("; "))]
    InvalidQuery(Vec<String>),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Backoff and pacing for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub backoff_multiplier: f64,
    /// Minimum spacing between two requests to the same source.
    pub min_request_interval: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            backoff_multiplier: 2.0,
            min_request_interval: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Defaults tuned to each API's published or observed limits.
    pub fn for_source(source: Source) -> Self {
        let interval = match source {
            // 120 requests per minute
            Source::Fred => Duration::from_millis(500),
            Source::Eia => Duration::from_millis(250),
            Source::Yahoo => Duration::from_secs(1),
            Source::Trends => Duration::from_secs(2),
            Source::Synthetic => Duration::ZERO,
        };
        Self {
            min_request_interval: interval,
            ..Self::default()
        }
    }

    /// Delay slept before retry number `retry` (0-based): `base * multiplier^retry`.
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.base_delay
            .mul_f64(self.backoff_multiplier.powi(retry as i32))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("max_attempts must be >= 1".into());
        }
        if self.base_delay.is_zero() || !(self.backoff_multiplier > 0.0) {
            return Err("delays must be positive".into());
        }
        Ok(())
    }
}

/// API keys, read from the environment only.
#[derive(Clone, Default)]
pub struct Credentials {
    pub fred: Option<String>,
    pub eia: Option<String>,
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credentials")
            .field("fred", &self.fred.as_ref().map(|_| "<set>"))
            .field("eia", &self.eia.as_ref().map(|_| "<set>"))
            .finish()
    }
}

impl Credentials {
    pub fn from_env() -> Self {
        let get = |var| std::env::var(var).ok().filter(|v: &String| !v.is_empty());
        Self {
            fred: get(FRED_KEY_VAR),
            eia: get(EIA_KEY_VAR),
        }
    }

    /// Stand-in keys for replay mode; keys never reach the fixture hash.
    pub fn replay() -> Self {
        Self {
            fred: Some("replay".into()),
            eia: Some("replay".into()),
        }
    }

    pub(crate) fn fred_key(&self) -> Result<&str, SourceError> {
        self.fred
            .as_deref()
            .ok_or(SourceError::AuthMissing(FRED_KEY_VAR))
    }

    pub(crate) fn eia_key(&self) -> Result<&str, SourceError> {
        self.eia
            .as_deref()
            .ok_or(SourceError::AuthMissing(EIA_KEY_VAR))
    }
}

/// One request attempt as seen by the fetcher.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRecord {
    pub source: Source,
    pub sent_at: Duration,
    pub status: Option<u16>,
}

/// Executes queries with pacing and retry.
pub struct Fetcher {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    credentials: Credentials,
    policies: BTreeMap<Source, RetryPolicy>,
    last_sent: BTreeMap<Source, Mutex<Option<Duration>>>,
    attempts: Mutex<Vec<AttemptRecord>>,
}

impl Fetcher {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>, credentials: Credentials) -> Self {
        let all = [
            Source::Fred,
            Source::Eia,
            Source::Yahoo,
            Source::Trends,
            Source::Synthetic,
        ];
        Self {
            transport,
            clock,
            credentials,
            policies: all.iter().map(|&s| (s, RetryPolicy::for_source(s))).collect(),
            last_sent: all.iter().map(|&s| (s, Mutex::new(None))).collect(),
            attempts: Mutex::new(Vec::new()),
        }
    }

    pub fn with_policy(mut self, source: Source, policy: RetryPolicy) -> Self {
        self.policies.insert(source, policy);
        self
    }

    pub fn policy(&self, source: Source) -> &RetryPolicy {
        &self.policies[&source]
    }

    /// Every attempt made so far, in send order.
    pub fn attempt_log(&self) -> Vec<AttemptRecord> {
        self.attempts.lock().expect("attempt log").clone()
    }

    /// Sends one request, pacing per source and retrying 429 / 5xx /
    /// network failures with exponential backoff. A missing replay fixture
    /// is not retried.
    pub fn send(&self, request: &HttpRequest) -> Result<HttpResponse, SourceError> {
        let policy = self.policy(request.source).clone();
        policy.validate().map_err(|e| SourceError::InvalidQuery(vec![e]))?;
        let mut last_error = SourceError::RateLimited { attempts: 0 };
        for attempt in 0..policy.max_attempts {
            if attempt > 0 {
                self.clock.sleep(policy.delay_before_retry(attempt - 1));
            }
            let outcome = {
                let mut last = self.last_sent[&request.source].lock().expect("pacer lock");
                if let Some(prev) = *last {
                    let elapsed = self.clock.now().saturating_sub(prev);
                    if elapsed < policy.min_request_interval {
                        self.clock.sleep(policy.min_request_interval - elapsed);
                    }
                }
                let sent_at = self.clock.now();
                *last = Some(sent_at);
                let outcome = self.transport.send(request);
                self.attempts.lock().expect("attempt log").push(AttemptRecord {
                    source: request.source,
                    sent_at,
                    status: outcome.as_ref().ok().map(|r| r.status),
                });
                outcome
            };
            match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp),
                Ok(resp) if resp.status == 429 => {
                    log::warn!("{}: HTTP 429, attempt {}", request.source, attempt + 1);
                    last_error = SourceError::RateLimited {
                        attempts: attempt + 1,
                    };
                }
                Ok(resp) if resp.status >= 500 => {
                    log::warn!("{}: HTTP {}, attempt {}", request.source, resp.status, attempt + 1);
                    last_error = SourceError::UpstreamError {
                        status: resp.status,
                    };
                }
                Ok(resp) => return Err(SourceError::UpstreamError { status: resp.status }),
                Err(e @ TransportError::FixtureMissing(_)) => return Err(e.into()),
                Err(e) => {
                    log::warn!("{}: {e}, attempt {}", request.source, attempt + 1);
                    last_error = e.into();
                }
            }
        }
        Err(last_error)
    }

    /// Runs one query end to end.
    pub fn fetch(&self, query: &SourceQuery) -> Result<Vec<TimeSeries>, SourceError> {
        validate_query(query).map_err(SourceError::InvalidQuery)?;
        match &query.payload {
            QueryPayload::Fred(q) => {
                let req = fred::request(q, &self.credentials)?;
                let resp = self.send(&req)?;
                fred::parse(&resp.body, q, &query.comment).map(|s| vec![s])
            }
            QueryPayload::Eia(q) => {
                let key = self.credentials.eia_key()?;
                let mut rows = Vec::new();
                let (mut offset, length) = eia::page_window(q);
                for _ in 0..eia::MAX_PAGES {
                    let req = eia::request(q, key, offset, length);
                    let resp = self.send(&req)?;
                    let page = eia::parse_page(&resp.body)?;
                    let received = page.rows.len();
                    rows.extend(page.rows);
                    offset += received;
                    if received == 0 || offset >= page.total {
                        break;
                    }
                }
                eia::assemble(rows, q, &query.comment)
            }
            QueryPayload::Yahoo(q) => {
                let resp = self.send(&yahoo::request(q))?;
                yahoo::parse(&resp.body, q, &query.comment).map(|s| vec![s])
            }
            QueryPayload::Trends(q) => {
                let resp = self.send(&trends::request(q))?;
                trends::parse(&resp.body, q, &query.comment).map(|s| vec![s])
            }
        }
    }
}

/// Turns raw dated observations into a series: non-finite values dropped,
/// sorted by date, repeated dates collapsed to their first occurrence.
pub(crate) fn assemble_series(
    source: Source,
    native_id: &str,
    comment: &str,
    mut points: Vec<(NaiveDate, f64)>,
) -> Result<TimeSeries, SourceError> {
    points.retain(|(_, v)| v.is_finite());
    points.sort_by_key(|(d, _)| *d);
    points.dedup_by_key(|(d, _)| *d);
    if points.len() < 2 {
        return Err(SourceError::EmptyResult(format!(
            "{source} {native_id}: {} usable observations",
            points.len()
        )));
    }
    let first = points[0].0;
    let last = points[points.len() - 1].0;
    let (timestamps, values) = points.into_iter().unzip();
    TimeSeries::original(
        series_id(source, native_id, first, last),
        source,
        timestamps,
        values,
        comment,
    )
    .map_err(|e| SourceError::ParseError(e.to_string()))
}

pub(crate) fn parse_json(body: &str) -> Result<serde_json::Value, SourceError> {
    serde_json::from_str(body).map_err(|e| SourceError::ParseError(e.to_string()))
}
