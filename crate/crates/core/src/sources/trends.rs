//! Google Trends interest-over-time (weekly) through the unofficial
//! `widgetdata/multiline` endpoint. There is no official API, so this
//! connector is best-effort live and primarily exercised through fixtures.

use chrono::DateTime;
use serde_json::{json, Value};

use super::{assemble_series, parse_json, HttpRequest, SourceError, TrendsQuery};
use crate::series::{Source, TimeSeries};

pub const ENDPOINT: &str = "https://trends.google.com/trends/api/widgetdata/multiline";

/// Anti-JSON-hijacking prefix Google puts in front of the payload.
const XSSI_PREFIX: &str = ")]}'";

pub fn request(query: &TrendsQuery) -> HttpRequest {
    let mut item = json!({
        "complexKeywordsRestriction": {
            "keyword": [{"type": "BROAD", "value": query.keyword}]
        }
    });
    if let Some(geo) = &query.geo {
        item["geo"] = json!({ "country": geo });
    }
    let req = json!({
        "time": format!("{} {}", query.start_date, query.end_date),
        "resolution": "WEEK",
        "locale": "en-US",
        "comparisonItem": [item],
        "requestOptions": {"property": "", "backend": "IZG", "category": 0}
    });
    HttpRequest::get(Source::Trends, ENDPOINT)
        .param("hl", "en-US")
        .param("tz", "0")
        .param("req", req.to_string())
}

pub fn parse(body: &str, query: &TrendsQuery, comment: &str) -> Result<TimeSeries, SourceError> {
    let trimmed = body.trim_start();
    let payload = match trimmed.strip_prefix(XSSI_PREFIX) {
        Some(rest) => rest.trim_start_matches(',').trim_start(),
        None => trimmed,
    };
    let json = parse_json(payload)?;
    let rows = json
        .pointer("/default/timelineData")
        .and_then(Value::as_array)
        .ok_or_else(|| SourceError::ParseError("missing default.timelineData".into()))?;
    let mut points = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let secs = match row.get("time") {
            Some(Value::String(s)) => s.parse::<i64>().ok(),
            Some(Value::Number(n)) => n.as_i64(),
            _ => None,
        };
        let date = secs
            .and_then(|t| DateTime::from_timestamp(t, 0))
            .map(|dt| dt.date_naive())
            .ok_or_else(|| SourceError::ParseError(format!("row {i}: bad time")))?;
        if row.pointer("/hasData/0") == Some(&Value::Bool(false)) {
            continue;
        }
        let value = row
            .pointer("/value/0")
            .and_then(Value::as_f64)
            .ok_or_else(|| SourceError::ParseError(format!("row {i}: bad value")))?;
        points.push((date, value));
    }
    let native = match &query.geo {
        Some(geo) => format!("{}_{geo}", query.keyword),
        None => query.keyword.clone(),
    };
    assemble_series(Source::Trends, &native, comment, points)
}
