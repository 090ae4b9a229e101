//! Yahoo Finance public chart endpoint; the daily (or weekly) close is the value.

use chrono::{DateTime, NaiveTime};
use serde_json::Value;

use super::{assemble_series, parse_json, HttpRequest, SourceError, YahooInterval, YahooQuery};
use crate::series::{Source, TimeSeries};

pub const ENDPOINT: &str = "https://query1.finance.yahoo.com/v8/finance/chart";

pub fn request(query: &YahooQuery) -> HttpRequest {
    let unix = |d: chrono::NaiveDate| d.and_time(NaiveTime::MIN).and_utc().timestamp();
    let interval = match query.interval {
        YahooInterval::Daily => "1d",
        YahooInterval::Weekly => "1wk",
    };
    HttpRequest::get(Source::Yahoo, format!("{ENDPOINT}/{}", query.ticker))
        .param("period1", unix(query.start_date).to_string())
        .param("period2", unix(query.end_date).to_string())
        .param("interval", interval)
        .param("events", "history")
}

pub fn parse(body: &str, query: &YahooQuery, comment: &str) -> Result<TimeSeries, SourceError> {
    let json = parse_json(body)?;
    let chart = json
        .get("chart")
        .ok_or_else(|| SourceError::ParseError("missing chart object".into()))?;
    if let Some(err) = chart.get("error").filter(|e| !e.is_null()) {
        return Err(SourceError::ParseError(format!("chart error: {err}")));
    }
    let result = chart
        .get("result")
        .and_then(Value::as_array)
        .and_then(|r| r.first())
        .ok_or_else(|| SourceError::ParseError("missing chart result".into()))?;
    let stamps = result
        .get("timestamp")
        .and_then(Value::as_array)
        .ok_or_else(|| SourceError::ParseError("missing timestamp array".into()))?;
    let closes = result
        .pointer("/indicators/quote/0/close")
        .and_then(Value::as_array)
        .ok_or_else(|| SourceError::ParseError("missing close array".into()))?;
    if stamps.len() != closes.len() {
        return Err(SourceError::ParseError(format!(
            "{} timestamps but {} closes",
            stamps.len(),
            closes.len()
        )));
    }
    let mut points = Vec::with_capacity(stamps.len());
    for (i, (ts, close)) in stamps.iter().zip(closes).enumerate() {
        let date = ts
            .as_i64()
            .and_then(|t| DateTime::from_timestamp(t, 0))
            .map(|dt| dt.date_naive())
            .ok_or_else(|| SourceError::ParseError(format!("row {i}: bad timestamp")))?;
        match close {
            Value::Null => continue,
            Value::Number(n) => points.push((date, n.as_f64().unwrap_or(f64::NAN))),
            other => {
                return Err(SourceError::ParseError(format!("row {i}: bad close {other}")))
            }
        }
    }
    assemble_series(Source::Yahoo, &query.ticker, comment, points)
}
