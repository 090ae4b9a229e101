//! FRED `series/observations` endpoint.

use chrono::NaiveDate;
use serde_json::Value;

use super::{assemble_series, parse_json, Credentials, FredQuery, HttpRequest, SourceError};
use crate::series::{Source, TimeSeries};

pub const ENDPOINT: &str = "https://api.stlouisfed.org/fred/series/observations";

pub fn request(query: &FredQuery, credentials: &Credentials) -> Result<HttpRequest, SourceError> {
    let key = credentials.fred_key()?;
    Ok(HttpRequest::get(Source::Fred, ENDPOINT)
        .param("series_id", &query.series_id)
        .param("observation_start", query.start_date.to_string())
        .param("observation_end", query.end_date.to_string())
        .param("file_type", "json")
        .secret("api_key", key))
}

/// Parses `{"observations": [{"date": "...", "value": "..."}, ...]}`.
/// FRED marks missing observations with `"."`; those are dropped.
pub fn parse(body: &str, query: &FredQuery, comment: &str) -> Result<TimeSeries, SourceError> {
    let json = parse_json(body)?;
    let observations = json
        .get("observations")
        .and_then(Value::as_array)
        .ok_or_else(|| SourceError::ParseError("missing observations array".into()))?;
    let mut points = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let date = obs
            .get("date")
            .and_then(Value::as_str)
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
            .ok_or_else(|| SourceError::ParseError(format!("observation {i}: bad date")))?;
        let value = match obs.get("value") {
            Some(Value::String(s)) if s.trim() == "." || s.trim().is_empty() => continue,
            Some(Value::String(s)) => s.trim().parse::<f64>().map_err(|_| {
                SourceError::ParseError(format!("observation {i}: bad value {s:?}"))
            })?,
            Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
            Some(Value::Null) | None => continue,
            Some(other) => {
                return Err(SourceError::ParseError(format!(
                    "observation {i}: unexpected value {other}"
                )))
            }
        };
        points.push((date, value));
    }
    assemble_series(Source::Fred, &query.series_id, comment, points)
}
