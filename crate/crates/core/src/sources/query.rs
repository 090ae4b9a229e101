//! Typed per-API queries and their JSON form.
//!
//! The JSON spelling follows the query objects emitted during query
//! generation: `series_id`, `start_date`, `end_date`, `api_route`, `params`,
//! `comment`, plus `ticker`/`interval` for Yahoo and `keyword`/`geo`/
//! `timeframe` for Trends. An optional `source` field disambiguates; without
//! it the source is inferred from the identifying field.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::series::Source;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FredQuery {
    pub series_id: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EiaQuery {
    pub api_route: String,
    pub params: IndexMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum YahooInterval {
    Daily,
    Weekly,
}

impl YahooInterval {
    pub fn as_str(self) -> &'static str {
        match self {
            YahooInterval::Daily => "daily",
            YahooInterval::Weekly => "weekly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YahooQuery {
    pub ticker: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub interval: YahooInterval,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendsQuery {
    pub keyword: String,
    pub geo: Option<String>,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryPayload {
    Fred(FredQuery),
    Eia(EiaQuery),
    Yahoo(YahooQuery),
    Trends(TrendsQuery),
}

/// One query against one data source, with the justification that came with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceQuery {
    pub payload: QueryPayload,
    pub comment: String,
}

impl SourceQuery {
    pub fn fred(series_id: &str, start: NaiveDate, end: NaiveDate, comment: &str) -> Self {
        Self {
            payload: QueryPayload::Fred(FredQuery {
                series_id: series_id.to_string(),
                start_date: start,
                end_date: end,
            }),
            comment: comment.to_string(),
        }
    }

    pub fn source(&self) -> Source {
        match self.payload {
            QueryPayload::Fred(_) => Source::Fred,
            QueryPayload::Eia(_) => Source::Eia,
            QueryPayload::Yahoo(_) => Source::Yahoo,
            QueryPayload::Trends(_) => Source::Trends,
        }
    }

    /// Payload fields as flat strings, comment excluded.
    fn payload_fields(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        match &self.payload {
            QueryPayload::Fred(q) => {
                out.insert("series_id".into(), q.series_id.clone());
                out.insert("start_date".into(), q.start_date.to_string());
                out.insert("end_date".into(), q.end_date.to_string());
            }
            QueryPayload::Eia(q) => {
                out.insert("api_route".into(), q.api_route.clone());
                for (k, v) in &q.params {
                    out.insert(format!("params.{k}"), v.clone());
                }
            }
            QueryPayload::Yahoo(q) => {
                out.insert("ticker".into(), q.ticker.clone());
                out.insert("start_date".into(), q.start_date.to_string());
                out.insert("end_date".into(), q.end_date.to_string());
                out.insert("interval".into(), q.interval.as_str().into());
            }
            QueryPayload::Trends(q) => {
                out.insert("keyword".into(), q.keyword.clone());
                out.insert("geo".into(), q.geo.clone().unwrap_or_default());
                out.insert("timeframe".into(), format!("{} {}", q.start_date, q.end_date));
            }
        }
        out
    }

    /// Source plus sorted payload fields; equal keys mean duplicate queries.
    pub fn canonical_key(&self) -> String {
        let mut key = self.source().as_str().to_string();
        for (k, v) in self.payload_fields() {
            key.push('\u{1f}');
            key.push_str(&k);
            key.push('=');
            key.push_str(&v);
        }
        key
    }

    /// Short identifier for logs.
    pub fn label(&self) -> String {
        match &self.payload {
            QueryPayload::Fred(q) => format!("FRED {} {}..{}", q.series_id, q.start_date, q.end_date),
            QueryPayload::Eia(q) => format!("EIA {}", q.api_route),
            QueryPayload::Yahoo(q) => format!("YAHOO {} {}..{}", q.ticker, q.start_date, q.end_date),
            QueryPayload::Trends(q) => {
                format!("TRENDS {:?} {}..{}", q.keyword, q.start_date, q.end_date)
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("source".into(), Value::String(self.source().as_str().into()));
        match &self.payload {
            QueryPayload::Fred(q) => {
                obj.insert("series_id".into(), q.series_id.clone().into());
                obj.insert("start_date".into(), q.start_date.to_string().into());
                obj.insert("end_date".into(), q.end_date.to_string().into());
            }
            QueryPayload::Eia(q) => {
                obj.insert("api_route".into(), q.api_route.clone().into());
                let params: Map<String, Value> = q
                    .params
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect();
                obj.insert("params".into(), Value::Object(params));
            }
            QueryPayload::Yahoo(q) => {
                obj.insert("ticker".into(), q.ticker.clone().into());
                obj.insert("start_date".into(), q.start_date.to_string().into());
                obj.insert("end_date".into(), q.end_date.to_string().into());
                obj.insert("interval".into(), q.interval.as_str().into());
            }
            QueryPayload::Trends(q) => {
                obj.insert("keyword".into(), q.keyword.clone().into());
                if let Some(geo) = &q.geo {
                    obj.insert("geo".into(), geo.clone().into());
                }
                obj.insert(
                    "timeframe".into(),
                    format!("{} {}", q.start_date, q.end_date).into(),
                );
            }
        }
        obj.insert("comment".into(), self.comment.clone().into());
        Value::Object(obj)
    }

    /// Maps a raw JSON object onto a typed query.
    ///
    /// `hint` forces the source; otherwise it comes from a `source` field or
    /// the identifying field (`series_id`, `api_route`, `ticker`, `keyword`).
    /// Unknown fields are reported in the returned warning list.
    pub fn from_json_object(
        obj: &Map<String, Value>,
        hint: Option<Source>,
    ) -> Result<(SourceQuery, Vec<String>), String> {
        let declared = match obj.get("source") {
            None => None,
            Some(Value::String(s)) => Some(
                Source::parse(s).ok_or_else(|| format!("unknown source {s:?}"))?,
            ),
            Some(_) => return Err("field source must be a string".into()),
        };
        let source = match (hint, declared) {
            (Some(h), Some(d)) if h != d => {
                return Err(format!("source {d} does not match expected {h}"))
            }
            (Some(h), _) => h,
            (None, Some(d)) => d,
            (None, None) => infer_source(obj)?,
        };

        let fields = ObjectFields(obj);
        let comment = fields.opt_str("comment")?.unwrap_or_default();
        let (payload, known): (QueryPayload, &[&str]) = match source {
            Source::Fred => (
                QueryPayload::Fred(FredQuery {
                    series_id: fields.str("series_id")?,
                    start_date: fields.date("start_date")?,
                    end_date: fields.date("end_date")?,
                }),
                &["series_id", "start_date", "end_date"],
            ),
            Source::Eia => (
                QueryPayload::Eia(EiaQuery {
                    api_route: fields.str("api_route")?,
                    params: fields.params("params")?,
                }),
                &["api_route", "params"],
            ),
            Source::Yahoo => {
                let interval = match fields.opt_str("interval")?.as_deref() {
                    None | Some("daily") | Some("1d") => YahooInterval::Daily,
                    Some("weekly") | Some("1wk") => YahooInterval::Weekly,
                    Some(other) => return Err(format!("unsupported interval {other:?}")),
                };
                (
                    QueryPayload::Yahoo(YahooQuery {
                        ticker: fields.str("ticker")?,
                        start_date: fields.date("start_date")?,
                        end_date: fields.date("end_date")?,
                        interval,
                    }),
                    &["ticker", "start_date", "end_date", "interval"],
                )
            }
            Source::Trends => {
                let timeframe = fields.str("timeframe")?;
                let (start, end) = parse_timeframe(&timeframe)?;
                (
                    QueryPayload::Trends(TrendsQuery {
                        keyword: fields.str("keyword")?,
                        geo: fields.opt_str("geo")?.filter(|g| !g.is_empty()),
                        start_date: start,
                        end_date: end,
                    }),
                    &["keyword", "geo", "timeframe"],
                )
            }
            Source::Synthetic => return Err("synthetic series cannot be queried".into()),
        };

        let warnings = obj
            .keys()
            .filter(|k| !known.contains(&k.as_str()) && *k != "comment" && *k != "source")
            .map(|k| format!("ignored unknown field {k}"))
            .collect();
        Ok((SourceQuery { payload, comment }, warnings))
    }
}

impl fmt::Display for SourceQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for SourceQuery {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SourceQuery {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        let obj = value
            .as_object()
            .ok_or_else(|| D::Error::custom("query must be a JSON object"))?;
        let (query, _) = SourceQuery::from_json_object(obj, None).map_err(D::Error::custom)?;
        validate_query(&query).map_err(|reasons| D::Error::custom(reasons.join("; ")))?;
        Ok(query)
    }
}

fn infer_source(obj: &Map<String, Value>) -> Result<Source, String> {
    let candidates: Vec<Source> = [
        ("series_id", Source::Fred),
        ("api_route", Source::Eia),
        ("ticker", Source::Yahoo),
        ("keyword", Source::Trends),
    ]
    .into_iter()
    .filter(|(field, _)| obj.contains_key(*field))
    .map(|(_, s)| s)
    .collect();
    match candidates.as_slice() {
        [one] => Ok(*one),
        [] => Err("cannot determine source: no series_id, api_route, ticker or keyword".into()),
        _ => Err("ambiguous source: several identifying fields present".into()),
    }
}

fn parse_timeframe(text: &str) -> Result<(NaiveDate, NaiveDate), String> {
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((parse_date("timeframe", a)?, parse_date("timeframe", b)?)),
        _ => Err(format!("timeframe must be \"YYYY-MM-DD YYYY-MM-DD\", got {text:?}")),
    }
}

fn parse_date(field: &str, text: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|_| format!("invalid date in {field}: {text:?}"))
}

struct ObjectFields<'a>(&'a Map<String, Value>);

impl ObjectFields<'_> {
    fn opt_str(&self, name: &str) -> Result<Option<String>, String> {
        match self.0.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(format!("field {name} must be a string")),
        }
    }

    fn str(&self, name: &str) -> Result<String, String> {
        self.opt_str(name)?
            .ok_or_else(|| format!("missing field {name}"))
    }

    fn date(&self, name: &str) -> Result<NaiveDate, String> {
        parse_date(name, &self.str(name)?)
    }

    fn params(&self, name: &str) -> Result<IndexMap<String, String>, String> {
        let obj = match self.0.get(name) {
            None | Some(Value::Null) => return Err(format!("missing field {name}")),
            Some(Value::Object(o)) => o,
            Some(_) => return Err(format!("field {name} must be an object")),
        };
        obj.iter()
            .map(|(k, v)| {
                let text = match v {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    Value::Bool(b) => b.to_string(),
                    _ => return Err(format!("parameter {k} must be a scalar")),
                };
                Ok((k.clone(), text))
            })
            .collect()
    }
}

/// Checks query invariants and source-specific rules. Never panics; returns
/// every reason found.
pub fn validate_query(query: &SourceQuery) -> Result<(), Vec<String>> {
    let mut reasons = Vec::new();
    let dates = |start: NaiveDate, end: NaiveDate| {
        if start >= end {
            Some("start after end".to_string())
        } else {
            None
        }
    };
    match &query.payload {
        QueryPayload::Fred(q) => {
            if q.series_id.is_empty() {
                reasons.push("empty identifier".into());
            } else if !q
                .series_id
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
            {
                reasons.push(format!("series_id {:?} must match [A-Z0-9_]+", q.series_id));
            }
            reasons.extend(dates(q.start_date, q.end_date));
        }
        QueryPayload::Eia(q) => {
            let route = q.api_route.trim();
            if route.is_empty() {
                reasons.push("empty identifier".into());
            } else if route.starts_with('/')
                || route.contains("://")
                || route.contains("..")
                || route.contains(char::is_whitespace)
                || route.contains('?')
            {
                reasons.push(format!("api_route {route:?} must be a relative path"));
            }
            if q.params.keys().any(|k| k.trim().is_empty()) {
                reasons.push("empty parameter key".into());
            }
            let start = q.params.get("start").and_then(|s| parse_date("start", s).ok());
            let end = q.params.get("end").and_then(|s| parse_date("end", s).ok());
            if let (Some(s), Some(e)) = (start, end) {
                reasons.extend(dates(s, e));
            }
        }
        QueryPayload::Yahoo(q) => {
            if q.ticker.trim().is_empty() {
                reasons.push("empty identifier".into());
            } else if q.ticker.contains(char::is_whitespace) || q.ticker.contains('/') {
                reasons.push(format!("ticker {:?} contains invalid characters", q.ticker));
            }
            reasons.extend(dates(q.start_date, q.end_date));
        }
        QueryPayload::Trends(q) => {
            if q.keyword.trim().is_empty() {
                reasons.push("empty identifier".into());
            }
            reasons.extend(dates(q.start_date, q.end_date));
        }
    }
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(reasons)
    }
}

/// Drops queries whose canonical key was already seen. Stable; first wins.
pub fn dedup_queries(queries: Vec<SourceQuery>) -> Vec<SourceQuery> {
    let mut seen = HashSet::new();
    queries
        .into_iter()
        .filter(|q| seen.insert(q.canonical_key()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn validate_examples() {
        let ok = SourceQuery::fred("UNRATE", d("2007-01-01"), d("2013-01-01"), "recession");
        assert!(validate_query(&ok).is_ok());
        let reversed = SourceQuery::fred("UNRATE", d("2013-01-01"), d("2007-01-01"), "");
        assert_eq!(validate_query(&reversed), Err(vec!["start after end".to_string()]));
        let empty = SourceQuery::fred("", d("2007-01-01"), d("2013-01-01"), "");
        assert_eq!(validate_query(&empty), Err(vec!["empty identifier".to_string()]));
        let lower = SourceQuery::fred("unrate", d("2007-01-01"), d("2013-01-01"), "");
        assert!(validate_query(&lower).is_err());
    }

    #[test]
    fn eia_route_rules() {
        let mk = |route: &str| SourceQuery {
            payload: QueryPayload::Eia(EiaQuery {
                api_route: route.into(),
                params: IndexMap::new(),
            }),
            comment: String::new(),
        };
        assert!(validate_query(&mk("electricity/rto/daily-region-data/data")).is_ok());
        assert!(validate_query(&mk("/abs")).is_err());
        assert!(validate_query(&mk("https://x/y")).is_err());
        assert!(validate_query(&mk("")).is_err());
    }

    #[test]
    fn dedup_examples() {
        let a = SourceQuery::fred("UNRATE", d("2007-01-01"), d("2013-01-01"), "first");
        let b = SourceQuery::fred("UNRATE", d("2007-01-01"), d("2013-01-01"), "second");
        let c = SourceQuery::fred("UNRATE", d("2000-01-01"), d("2013-01-01"), "other range");
        let out = dedup_queries(vec![a.clone(), b, c.clone()]);
        assert_eq!(out, vec![a, c]);
        assert!(dedup_queries(vec![]).is_empty());
    }

    #[test]
    fn eia_params_key_order_ignored_in_dedup() {
        let raw1 = json!({"api_route": "a/b", "params": {"x": "1", "y": 2}});
        let raw2 = json!({"api_route": "a/b", "params": {"y": "2", "x": 1}});
        let (q1, _) = SourceQuery::from_json_object(raw1.as_object().unwrap(), None).unwrap();
        let (q2, _) = SourceQuery::from_json_object(raw2.as_object().unwrap(), None).unwrap();
        assert_eq!(dedup_queries(vec![q1, q2]).len(), 1);
    }

    #[test]
    fn json_round_trip() {
        let raw = json!({
            "api_route": "electricity/rto/daily-region-data/data",
            "params": {"frequency": "daily", "offset": 0, "length": 5000},
            "comment": "c"
        });
        let (q, warnings) = SourceQuery::from_json_object(raw.as_object().unwrap(), None).unwrap();
        assert!(warnings.is_empty());
        let back: SourceQuery = serde_json::from_value(q.to_json()).unwrap();
        assert_eq!(back, q);
        match &q.payload {
            QueryPayload::Eia(e) => assert_eq!(e.params["length"], "5000"),
            _ => panic!("expected EIA"),
        }
    }

    #[test]
    fn binding_errors() {
        let missing = json!({"series_id": "UNRATE", "start_date": "2007-01-01"});
        assert_eq!(
            SourceQuery::from_json_object(missing.as_object().unwrap(), Some(Source::Fred))
                .unwrap_err(),
            "missing field end_date"
        );
        let ambiguous = json!({"series_id": "A", "ticker": "B"});
        assert!(SourceQuery::from_json_object(ambiguous.as_object().unwrap(), None).is_err());
        let extra = json!({"series_id": "A", "start_date": "2007-01-01", "end_date": "2008-01-01", "units": "pc1"});
        let (_, w) = SourceQuery::from_json_object(extra.as_object().unwrap(), None).unwrap();
        assert_eq!(w, vec!["ignored unknown field units".to_string()]);
    }

    #[test]
    fn trends_timeframe() {
        let raw = json!({"keyword": "world cup", "geo": "US", "timeframe": "2020-01-01 2022-12-31"});
        let (q, _) = SourceQuery::from_json_object(raw.as_object().unwrap(), None).unwrap();
        assert_eq!(q.source(), Source::Trends);
        assert!(validate_query(&q).is_ok());
    }
}
