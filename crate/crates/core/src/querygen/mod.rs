//! Prompt templates, completion backends, and turning completion text into
//! validated [`SourceQuery`] lists.
//!
//! Only query JSON crosses the model boundary; generated code is never run.

mod backend;
mod catalog;
mod extract;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::series::Source;
use crate::sources::{dedup_queries, validate_query, SourceQuery};

pub use backend::{
    completion_path, prompt_key, write_completion, BackendInfo, CompletionBackend, LiveBackend,
    RecordBackend, ReplayBackend, LLM_API_KEY_VAR, LLM_ENDPOINT_VAR, LLM_MODEL_VAR,
};
pub use catalog::{merge_catalog, parse_catalog, CatalogEntry};
pub use extract::{extract_query_objects, RawObject};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuerygenError {
    #[error("template placeholder {{{0}}} is not bound")]
    MissingBinding(String),
    #[error("no query objects found in completion")]
    NoQueriesFound,
    #[error("completion backend failed: {0}")]
    BackendFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub followups: Vec<String>,
}

/// Placeholder names in order of first appearance. A placeholder is
/// `{name}` with `name` made of lowercase letters and underscores.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for (_, name) in placeholder_spans(text) {
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    names
}

fn placeholder_spans(text: &str) -> Vec<(usize, &str)> {
    let mut spans = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let len = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_lowercase() || **b == b'_')
                .count();
            if len > 0 && bytes.get(i + 1 + len) == Some(&b'}') {
                spans.push((i, &text[i + 1..i + 1 + len]));
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    spans
}

fn substitute(text: &str, bindings: &BTreeMap<String, String>) -> Result<String, QuerygenError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (pos, name) in placeholder_spans(text) {
        let value = bindings
            .get(name)
            .ok_or_else(|| QuerygenError::MissingBinding(name.to_string()))?;
        out.push_str(&text[last..pos]);
        out.push_str(value);
        last = pos + name.len() + 2;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Substitutes every placeholder in the body and follow-ups, then joins
/// them with blank lines. Bound values are inserted literally.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, QuerygenError> {
    let mut parts = vec![substitute(&template.body, bindings)?];
    for followup in &template.followups {
        parts.push(substitute(followup, bindings)?);
    }
    Ok(parts.join("\n\n"))
}

const DISCOVERY_BODY: &str = "I want to use general-purpose LLMs such as GPT4 to assist in constructing time series datasets, with a focus on datasets that suffer from distribution shifts. Our approach does not involve training a model, just using its empirical knowledge of past events to suggest datasets and time periods that might exhibit distributional shifts. For example, S&P500 data suffered a distribution shift during COVID-19. I want an LLM to generate query terms and data sources to build a heterogeneous time series dataset from different domains with distributional shifts. Please provide a list of open time series datasets from different contexts that can be used to query and extract time series with distribution shifts. In the list, clarify if the dataset has an API.\nProvide the list in latex tabular format with the following columns: Domain, Name of dataset, Description, API (yes/no), Link, Licence. Leave that column free if you don't have the link or license.";

pub const DISCOVERY_MORE: &str = "Provide additional data sources in the same format.";

const QUERY_BODY: &str = "Let's focus on {source_name}. Please provide Python code to query the API to download data that might exhibit distribution shifts. I will do statistical tests to prune the data and only keep the relevant data.\nAPI documentation: {api_docs_summary}\nKnown limitations: {rate_limit_note}";

const QUERY_FOLLOWUP: &str = "Provide a list of {query_count} queries for the {source_name} dataset in Python format with the series_id and time ranges that I can use to download the data that exhibit distribution shifts.";

pub const QUERY_MORE: &str =
    "Provide {remaining} additional queries for the {source_name} dataset in the same format.";

pub fn discovery_template() -> PromptTemplate {
    PromptTemplate {
        name: "discovery".into(),
        body: DISCOVERY_BODY.into(),
        followups: Vec::new(),
    }
}

pub fn query_template() -> PromptTemplate {
    PromptTemplate {
        name: "queries".into(),
        body: QUERY_BODY.into(),
        followups: vec![QUERY_FOLLOWUP.into()],
    }
}

/// What the model is told about one API.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProfile {
    pub source_name: &'static str,
    pub api_docs_summary: &'static str,
    pub rate_limit_note: &'static str,
}

pub fn source_profile(source: Source) -> Option<SourceProfile> {
    let profile = match source {
        Source::Fred => SourceProfile {
            source_name: "FRED",
            api_docs_summary: "GET https://api.stlouisfed.org/fred/series/observations with series_id, observation_start, observation_end, api_key, file_type=json. Answer with JSON objects {\"series_id\", \"start_date\" (YYYY-MM-DD), \"end_date\" (YYYY-MM-DD), \"comment\"}.",
            rate_limit_note: "at most 120 requests per minute per API key.",
        },
        Source::Eia => SourceProfile {
            source_name: "EIA",
            api_docs_summary: "EIA API v2, GET https://api.eia.gov/v2/<route>/ with frequency, data[0], facets[...][], sort, offset, length (max 5000), start, end. Answer with JSON objects {\"api_route\", \"params\" (string map), \"comment\"}.",
            rate_limit_note: "an API key is required; responses are capped at 5000 rows per page, so paginate with offset.",
        },
        Source::Yahoo => SourceProfile {
            source_name: "Yahoo Finance",
            api_docs_summary: "Daily or weekly closing prices by ticker symbol. Answer with JSON objects {\"ticker\", \"start_date\", \"end_date\", \"interval\" (daily or weekly), \"comment\"}.",
            rate_limit_note: "unofficial endpoint; keep to about one request per second.",
        },
        Source::Trends => SourceProfile {
            source_name: "Google Trends",
            api_docs_summary: "Weekly search interest (0-100) for a keyword and optional geo code. Answer with JSON objects {\"keyword\", \"geo\", \"timeframe\" (\"YYYY-MM-DD YYYY-MM-DD\"), \"comment\"}.",
            rate_limit_note: "no official API; aggressive throttling, keep to one request every few seconds.",
        },
        Source::Synthetic => return None,
    };
    Some(profile)
}

pub fn query_bindings(source: Source, query_count: usize) -> Option<BTreeMap<String, String>> {
    let p = source_profile(source)?;
    Some(BTreeMap::from([
        ("source_name".to_string(), p.source_name.to_string()),
        ("api_docs_summary".to_string(), p.api_docs_summary.to_string()),
        ("rate_limit_note".to_string(), p.rate_limit_note.to_string()),
        ("query_count".to_string(), query_count.to_string()),
    ]))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindOutcome {
    pub accepted: Vec<SourceQuery>,
    /// Rejected raw objects with the reason.
    pub rejected: Vec<(Value, String)>,
    pub warnings: Vec<String>,
}

/// Types and validates raw objects. Every input lands in exactly one of
/// `accepted` or `rejected`.
pub fn bind_queries(raw: Vec<RawObject>, source: Option<Source>) -> BindOutcome {
    let mut out = BindOutcome::default();
    for obj in raw {
        match SourceQuery::from_json_object(&obj, source) {
            Ok((query, warnings)) => match validate_query(&query) {
                Ok(()) => {
                    out.warnings.extend(
                        warnings
                            .into_iter()
                            .map(|w| format!("{}: {w}", query.label())),
                    );
                    out.accepted.push(query);
                }
                Err(reasons) => out.rejected.push((Value::Object(obj), reasons.join("; "))),
            },
            Err(reason) => out.rejected.push((Value::Object(obj), reason)),
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub query_count: usize,
    pub max_rounds: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            query_count: 50,
            max_rounds: 3,
        }
    }
}

/// The prompt of each round: the first is the rendered template, later ones
/// append the previous completion and the "more" follow-up to the transcript.
pub fn round_prompt(
    previous_prompt: Option<(&str, &str)>,
    source: Source,
    query_count: usize,
    remaining: usize,
) -> Result<String, QuerygenError> {
    let bindings = query_bindings(source, query_count)
        .ok_or_else(|| QuerygenError::InvalidConfig(format!("{source} has no query template")))?;
    match previous_prompt {
        None => render_prompt(&query_template(), &bindings),
        Some((prompt, completion)) => {
            let mut more = bindings;
            more.insert("remaining".into(), remaining.to_string());
            let followup = substitute(QUERY_MORE, &more)?;
            Ok(format!("{prompt}\n\n{completion}\n\n{followup}"))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Generated {
    pub queries: Vec<SourceQuery>,
    pub rounds: usize,
    pub rejected: usize,
}

/// Runs the query conversation for one source until `query_count` distinct
/// valid queries are collected or `max_rounds` completions were requested.
pub fn generate_queries(
    source: Source,
    backend: &dyn CompletionBackend,
    config: GenerateConfig,
) -> Result<Vec<SourceQuery>, QuerygenError> {
    generate_queries_detailed(source, backend, config).map(|g| g.queries)
}

pub fn generate_queries_detailed(
    source: Source,
    backend: &dyn CompletionBackend,
    config: GenerateConfig,
) -> Result<Generated, QuerygenError> {
    if config.query_count == 0 || config.max_rounds == 0 {
        return Err(QuerygenError::InvalidConfig(
            "query_count and max_rounds must be positive".into(),
        ));
    }
    let mut out = Generated::default();
    let mut transcript: Option<(String, String)> = None;
    while out.rounds < config.max_rounds && out.queries.len() < config.query_count {
        let remaining = config.query_count - out.queries.len();
        let prompt = round_prompt(
            transcript.as_ref().map(|(p, c)| (p.as_str(), c.as_str())),
            source,
            config.query_count,
            remaining,
        )?;
        let completion = backend.complete(&prompt)?;
        out.rounds += 1;
        match extract_query_objects(&completion) {
            Ok(raw) => {
                let bound = bind_queries(raw, Some(source));
                out.rejected += bound.rejected.len();
                let mut merged = std::mem::take(&mut out.queries);
                merged.extend(bound.accepted);
                out.queries = dedup_queries(merged);
            }
            Err(QuerygenError::NoQueriesFound) => {
                log::warn!("{source}: round {} completion held no queries", out.rounds);
            }
            Err(e) => return Err(e),
        }
        transcript = Some((prompt, completion));
    }
    if out.queries.is_empty() {
        return Err(QuerygenError::NoQueriesFound);
    }
    out.queries.truncate(config.query_count);
    Ok(out)
}

/// Asks for candidate datasets over `rounds` turns and parses the tables.
pub fn discover_sources(
    backend: &dyn CompletionBackend,
    rounds: usize,
) -> Result<Vec<CatalogEntry>, QuerygenError> {
    let mut prompt = render_prompt(&discovery_template(), &BTreeMap::new())?;
    let mut entries = Vec::new();
    for round in 0..rounds.max(1) {
        let completion = backend.complete(&prompt)?;
        entries.extend(parse_catalog(&completion));
        if round + 1 < rounds {
            prompt = format!("{prompt}\n\n{completion}\n\n{DISCOVERY_MORE}");
        }
    }
    Ok(merge_catalog(entries))
}
