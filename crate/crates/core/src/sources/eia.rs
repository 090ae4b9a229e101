//! EIA API v2 data routes, with offset/length pagination.
//!
//! One response may hold several series (one per facet combination, e.g.
//! per respondent). Rows are grouped by every field except `period`,
//! `value` and `*-units`, and each group becomes its own series.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde_json::Value;

use super::{assemble_series, parse_json, EiaQuery, HttpRequest, SourceError};
use crate::series::{Source, TimeSeries};

pub const BASE_URL: &str = "https://api.eia.gov/v2";
pub const DEFAULT_PAGE_LENGTH: usize = 5000;
pub const MAX_PAGES: usize = 10_000;

/// One parsed row: facet key, period, value (`None` when null).
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub key: Vec<(String, String)>,
    pub period: NaiveDate,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub total: usize,
    pub rows: Vec<Row>,
}

/// Starting offset and page length from the query's params.
pub fn page_window(query: &EiaQuery) -> (usize, usize) {
    let get = |k: &str| query.params.get(k).and_then(|v| v.parse::<usize>().ok());
    let length = get("length").filter(|&l| l > 0).unwrap_or(DEFAULT_PAGE_LENGTH);
    (get("offset").unwrap_or(0), length)
}

pub fn request(query: &EiaQuery, api_key: &str, offset: usize, length: usize) -> HttpRequest {
    let route = query.api_route.trim().trim_matches('/');
    let mut req = HttpRequest::get(Source::Eia, format!("{BASE_URL}/{route}/"));
    for (k, v) in &query.params {
        if k != "offset" && k != "length" {
            req = req.param(k, v);
        }
    }
    req.param("offset", offset.to_string())
        .param("length", length.to_string())
        .secret("api_key", api_key)
}

fn parse_period(text: &str) -> Option<NaiveDate> {
    // daily, hourly ("2018-01-01T05"), monthly, annual
    let day = text.get(..10).unwrap_or(text);
    NaiveDate::parse_from_str(day, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(&format!("{text}-01"), "%Y-%m-%d"))
        .or_else(|_| NaiveDate::parse_from_str(&format!("{text}-01-01"), "%Y-%m-%d"))
        .ok()
}

pub fn parse_page(body: &str) -> Result<Page, SourceError> {
    let json = parse_json(body)?;
    let response = json
        .get("response")
        .ok_or_else(|| SourceError::ParseError("missing response object".into()))?;
    let data = response
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| SourceError::ParseError("missing response.data array".into()))?;
    let total = match response.get("total") {
        Some(Value::Number(n)) => n.as_u64().map(|t| t as usize),
        Some(Value::String(s)) => s.parse().ok(),
        None => Some(data.len()),
        _ => None,
    }
    .ok_or_else(|| SourceError::ParseError("bad response.total".into()))?;

    let mut rows = Vec::with_capacity(data.len());
    for (i, item) in data.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| SourceError::ParseError(format!("row {i}: not an object")))?;
        let period = obj
            .get("period")
            .and_then(Value::as_str)
            .and_then(parse_period)
            .ok_or_else(|| SourceError::ParseError(format!("row {i}: bad period")))?;
        let value = match obj.get("value") {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) => n.as_f64(),
            Some(Value::String(s)) => Some(s.trim().parse::<f64>().map_err(|_| {
                SourceError::ParseError(format!("row {i}: bad value {s:?}"))
            })?),
            Some(other) => {
                return Err(SourceError::ParseError(format!("row {i}: bad value {other}")))
            }
        };
        let mut key: Vec<(String, String)> = obj
            .iter()
            .filter(|(k, _)| *k != "period" && *k != "value" && !k.ends_with("-units"))
            .filter_map(|(k, v)| match v {
                Value::String(s) => Some((k.clone(), s.clone())),
                Value::Number(n) => Some((k.clone(), n.to_string())),
                _ => None,
            })
            .collect();
        key.sort();
        rows.push(Row { key, period, value });
    }
    Ok(Page { total, rows })
}

/// Groups rows into series, ordered by facet key.
pub fn assemble(rows: Vec<Row>, query: &EiaQuery, comment: &str) -> Result<Vec<TimeSeries>, SourceError> {
    if rows.is_empty() {
        return Err(SourceError::EmptyResult(format!("EIA {}: no rows", query.api_route)));
    }
    let mut groups: BTreeMap<Vec<(String, String)>, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for row in rows {
        let points = groups.entry(row.key).or_default();
        if let Some(v) = row.value {
            points.push((row.period, v));
        }
    }
    let route = query
        .api_route
        .trim_matches('/')
        .trim_end_matches("/data")
        .replace('/', "_");
    let mut out = Vec::new();
    let mut last_err = None;
    for (key, points) in groups {
        // name fields duplicate their code fields; keep ids short
        let facets: Vec<&str> = key
            .iter()
            .filter(|(k, _)| !k.ends_with("-name") && !k.ends_with("-description"))
            .map(|(_, v)| v.as_str())
            .collect();
        let native = if facets.is_empty() {
            route.clone()
        } else {
            format!("{route}_{}", facets.join("_"))
        };
        match assemble_series(Source::Eia, &native, comment, points) {
            Ok(s) => out.push(s),
            Err(e) => last_err = Some(e),
        }
    }
    match (out.is_empty(), last_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(out),
    }
}
