//! Deterministic fixture sets shaped like real collections.
//!
//! Each set is a query file plus recorded wire-format responses for it, so
//! the replay pipeline runs end to end without network access. Exactly
//! `pruned` members carry a mean shift that the given detector confirms;
//! the rest are level noise that it rejects, so the pruned count is known
//! in advance.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate, NaiveTime};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use crate::changepoint::{classify, DetectorConfig, ShiftCategory};
use crate::pipeline::PipelineConfig;
use crate::series::{Source, TimeSeries};
use crate::sources::transport::write_fixture;
use crate::sources::{
    eia, fred, trends, yahoo, Credentials, EiaQuery, FredQuery, HttpResponse, SourceQuery,
    TrendsQuery, YahooInterval, YahooQuery,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub name: &'static str,
    pub source: Source,
    pub domain: &'static str,
    pub description: &'static str,
    pub original: usize,
    pub pruned: usize,
    pub length_min: usize,
    pub length_max: usize,
}

/// Stage counts and length ranges of the five reference collections.
pub const REFERENCE_SETS: [SyntheticSpec; 5] = [
    SyntheticSpec {
        name: "fred",
        source: Source::Fred,
        domain: "Economics & Finance",
        description: "US macroeconomic and financial indicators",
        original: 241,
        pruned: 77,
        length_min: 31,
        length_max: 1305,
    },
    SyntheticSpec {
        name: "worldcup",
        source: Source::Trends,
        domain: "Google search",
        description: "Weekly search interest in 2022 World Cup topics",
        original: 173,
        pruned: 67,
        length_min: 120,
        length_max: 120,
    },
    SyntheticSpec {
        name: "eia",
        source: Source::Eia,
        domain: "Energy",
        description: "Daily electricity demand and generation by balancing authority",
        original: 3750,
        pruned: 1194,
        length_min: 32,
        length_max: 254,
    },
    SyntheticSpec {
        name: "yahoo",
        source: Source::Yahoo,
        domain: "Finance",
        description: "Daily closes of equities, commodities and currency pairs",
        original: 369,
        pruned: 91,
        length_min: 41,
        length_max: 252,
    },
    SyntheticSpec {
        name: "covid",
        source: Source::Trends,
        domain: "Google search",
        description: "Weekly search interest in COVID-19 topics",
        original: 144,
        pruned: 68,
        length_min: 120,
        length_max: 120,
    },
];

pub fn reference_set(name: &str) -> Option<&'static SyntheticSpec> {
    REFERENCE_SETS.iter().find(|s| s.name == name)
}

/// Series per EIA query; each response is paged.
const EIA_GROUP: usize = 50;
const EIA_PAGE: usize = 5000;
const EIA_ROUTE: &str = "electricity/rto/daily-region-data/data";
const MAX_DRAWS: usize = 10_000;

/// Paths of a written set. Config paths are relative to `root`.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub root: PathBuf,
    pub config_path: PathBuf,
    pub query_path: PathBuf,
    pub fixtures_dir: PathBuf,
    pub queries: usize,
}

struct Member {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

/// Writes `<root>/fixtures/...`, `<root>/<name>.queries.json` and a replay
/// config `<root>/<name>.config.json`.
pub fn write_fixture_set(
    spec: &SyntheticSpec,
    root: &Path,
    seed: u64,
    detector: &DetectorConfig,
) -> io::Result<FixtureSet> {
    let fixtures_dir = root.join("fixtures");
    fs::create_dir_all(&fixtures_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = members(spec, &mut rng, detector)?;

    let queries = match spec.source {
        Source::Fred => write_fred(spec, &members, &fixtures_dir)?,
        Source::Eia => write_eia(spec, &members, &fixtures_dir)?,
        Source::Yahoo => write_yahoo(spec, &members, &fixtures_dir)?,
        Source::Trends => write_trends(spec, &members, &fixtures_dir)?,
        Source::Synthetic => {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "no wire format"))
        }
    };
    let query_json: Vec<Value> = queries.iter().map(SourceQuery::to_json).collect();
    let query_path = root.join(format!("{}.queries.json", spec.name));
    fs::write(&query_path, serde_json::to_string_pretty(&query_json)? + "\n")?;

    let mut config = PipelineConfig::new(spec.name, spec.source);
    config.query_file = Some(PathBuf::from(format!("{}.queries.json", spec.name)));
    config.domain = spec.domain.into();
    config.description = spec.description.into();
    config.detector = detector.clone();
    config.master_seed = seed;
    let config_path = root.join(format!("{}.config.json", spec.name));
    fs::write(&config_path, serde_json::to_string_pretty(&config)? + "\n")?;

    Ok(FixtureSet {
        root: root.to_path_buf(),
        config_path,
        query_path,
        fixtures_dir,
        queries: queries.len(),
    })
}

fn members(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, detector: &DetectorConfig) -> io::Result<Vec<Member>> {
    let mut shifted = vec![false; spec.original];
    shifted[..spec.pruned].iter_mut().for_each(|s| *s = true);
    shifted.shuffle(rng);
    let base = NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date");
    let weekly = spec.source == Source::Trends;
    let mut out = Vec::with_capacity(spec.original);
    for (i, &shift) in shifted.iter().enumerate() {
        let n = match i {
            0 => spec.length_min,
            1 => spec.length_max,
            _ => rng.random_range(spec.length_min..=spec.length_max),
        };
        let start = base + Days::new(rng.random_range(0..700u64) * if weekly { 7 } else { 1 });
        let step = if weekly { 7 } else { 1 };
        let dates: Vec<NaiveDate> = (0..n).map(|k| start + Days::new(k as u64 * step)).collect();
        let values = draw_values(spec.source, n, shift, rng, detector, &dates).ok_or_else(|| {
            io::Error::other(format!("could not draw member {i} of {}", spec.name))
        })?;
        out.push(Member { dates, values });
    }
    Ok(out)
}

/// Wire precision per source, applied before verification so the detector
/// sees exactly what the connector will parse.
fn quantize(source: Source, v: f64) -> f64 {
    match source {
        Source::Trends => v.round().clamp(0.0, 100.0),
        Source::Yahoo => (v * 100.0).round() / 100.0,
        _ => (v * 1000.0).round() / 1000.0,
    }
}

fn draw_values(
    source: Source,
    n: usize,
    shift: bool,
    rng: &mut ChaCha8Rng,
    detector: &DetectorConfig,
    dates: &[NaiveDate],
) -> Option<Vec<f64>> {
    let (level, sigma): (f64, f64) = match source {
        Source::Trends => (rng.random_range(30.0..60.0), rng.random_range(4.0..8.0)),
        Source::Yahoo => (rng.random_range(20.0..400.0), 0.0),
        _ => (rng.random_range(-50.0..200.0), 0.0),
    };
    let sigma = if sigma > 0.0 { sigma } else { level.abs().max(1.0) * rng.random_range(0.01..0.05) };
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let want = if shift { ShiftCategory::H1Shift } else { ShiftCategory::H0NoShift };
    for _ in 0..MAX_DRAWS {
        let mut values: Vec<f64> = (0..n).map(|_| level + noise.sample(rng)).collect();
        if shift {
            let at = rng.random_range(n / 4..=(3 * n / 4).max(n / 4));
            let size = rng.random_range(2.5..5.0) * sigma * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            values[at..].iter_mut().for_each(|v| *v += size);
        }
        let values: Vec<f64> = values.into_iter().map(|v| quantize(source, v)).collect();
        let series = TimeSeries::original("probe", source, dates.to_vec(), values.clone(), "").ok()?;
        if classify(&series, detector).ok() == Some(want) {
            return Some(values);
        }
    }
    None
}

fn write_fred(spec: &SyntheticSpec, members: &[Member], dir: &Path) -> io::Result<Vec<SourceQuery>> {
    let creds = Credentials::replay();
    let mut queries = Vec::new();
    for (i, m) in members.iter().enumerate() {
        let q = FredQuery {
            series_id: format!("SYN{}{i:04}", spec.name.to_uppercase()),
            start_date: m.dates[0],
            end_date: *m.dates.last().expect("non-empty"),
        };
        let observations: Vec<Value> = m
            .dates
            .iter()
            .zip(&m.values)
            .map(|(d, v)| json!({"date": d.to_string(), "value": v.to_string()}))
            .collect();
        let body = json!({
            "observation_start": q.start_date.to_string(),
            "observation_end": q.end_date.to_string(),
            "count": observations.len(),
            "observations": observations,
        });
        let req = fred::request(&q, &creds).map_err(io::Error::other)?;
        record(dir, &req, body)?;
        queries.push(SourceQuery {
            payload: crate::sources::QueryPayload::Fred(q),
            comment: format!("synthetic member {i}"),
        });
    }
    Ok(queries)
}

fn write_eia(spec: &SyntheticSpec, members: &[Member], dir: &Path) -> io::Result<Vec<SourceQuery>> {
    let mut queries = Vec::new();
    for (g, group) in members.chunks(EIA_GROUP).enumerate() {
        let parent = format!("P{g:03}");
        let start = group.iter().map(|m| m.dates[0]).min().expect("non-empty group");
        let end = group
            .iter()
            .map(|m| *m.dates.last().expect("non-empty"))
            .max()
            .expect("non-empty group");
        let mut params = IndexMap::new();
        for (k, v) in [
            ("frequency", "daily".to_string()),
            ("data[0]", "value".to_string()),
            ("facets[parent][]", parent.clone()),
            ("sort[0][column]", "period".to_string()),
            ("sort[0][direction]", "desc".to_string()),
            ("offset", "0".to_string()),
            ("length", EIA_PAGE.to_string()),
            ("start", start.to_string()),
            ("end", end.to_string()),
        ] {
            params.insert(k.to_string(), v);
        }
        let q = EiaQuery {
            api_route: EIA_ROUTE.into(),
            params,
        };
        let mut rows = Vec::new();
        for (k, m) in group.iter().enumerate() {
            let respondent = format!("R{:04}", g * EIA_GROUP + k);
            for (d, v) in m.dates.iter().zip(&m.values) {
                rows.push((
                    *d,
                    json!({
                        "period": d.to_string(),
                        "respondent": respondent,
                        "respondent-name": format!("{} balancing authority", spec.name.to_uppercase()),
                        "parent": parent,
                        "type": "D",
                        "type-name": "Demand",
                        "value": v,
                        "value-units": "megawatthours",
                    }),
                ));
            }
        }
        rows.sort_by(|a, b| b.0.cmp(&a.0));
        let rows: Vec<Value> = rows.into_iter().map(|(_, r)| r).collect();
        let total = rows.len();
        for (p, page) in rows.chunks(EIA_PAGE).enumerate() {
            let body = json!({
                "response": {
                    "total": total.to_string(),
                    "dateFormat": "YYYY-MM-DD",
                    "frequency": "daily",
                    "data": page,
                }
            });
            record(dir, &eia::request(&q, "replay", p * EIA_PAGE, EIA_PAGE), body)?;
        }
        queries.push(SourceQuery {
            payload: crate::sources::QueryPayload::Eia(q),
            comment: format!("synthetic group {g}"),
        });
    }
    Ok(queries)
}

fn write_yahoo(_spec: &SyntheticSpec, members: &[Member], dir: &Path) -> io::Result<Vec<SourceQuery>> {
    let open = NaiveTime::from_hms_opt(14, 30, 0).expect("valid time");
    let mut queries = Vec::new();
    for (i, m) in members.iter().enumerate() {
        let q = YahooQuery {
            ticker: format!("SYN{i:03}"),
            start_date: m.dates[0],
            end_date: *m.dates.last().expect("non-empty") + Days::new(1),
            interval: YahooInterval::Daily,
        };
        let stamps: Vec<i64> = m
            .dates
            .iter()
            .map(|d| d.and_time(open).and_utc().timestamp())
            .collect();
        let body = json!({
            "chart": {
                "result": [{
                    "meta": {"currency": "USD", "symbol": q.ticker},
                    "timestamp": stamps,
                    "indicators": {"quote": [{"close": m.values}]}
                }],
                "error": null
            }
        });
        record(dir, &yahoo::request(&q), body)?;
        queries.push(SourceQuery {
            payload: crate::sources::QueryPayload::Yahoo(q),
            comment: format!("synthetic member {i}"),
        });
    }
    Ok(queries)
}

fn write_trends(spec: &SyntheticSpec, members: &[Member], dir: &Path) -> io::Result<Vec<SourceQuery>> {
    let mut queries = Vec::new();
    for (i, m) in members.iter().enumerate() {
        let q = TrendsQuery {
            keyword: format!("{} topic {i:03}", spec.name),
            geo: Some("US".into()),
            start_date: m.dates[0],
            end_date: *m.dates.last().expect("non-empty"),
        };
        let timeline: Vec<Value> = m
            .dates
            .iter()
            .zip(&m.values)
            .map(|(d, v)| {
                json!({
                    "time": d.and_time(NaiveTime::MIN).and_utc().timestamp().to_string(),
                    "formattedTime": d.format("%b %-d, %Y").to_string(),
                    "value": [*v as i64],
                    "hasData": [true],
                })
            })
            .collect();
        let body = format!(
            ")]}}',\n{}",
            json!({"default": {"timelineData": timeline, "averages": []}})
        );
        let req = trends::request(&q);
        write_fixture(dir, &req, &HttpResponse::ok(body)).map_err(io::Error::other)?;
        queries.push(SourceQuery {
            payload: crate::sources::QueryPayload::Trends(q),
            comment: format!("synthetic member {i}"),
        });
    }
    Ok(queries)
}

fn record(dir: &Path, req: &crate::sources::HttpRequest, body: Value) -> io::Result<()> {
    write_fixture(dir, req, &HttpResponse::ok(body.to_string()))
        .map(|_| ())
        .map_err(io::Error::other)
}
