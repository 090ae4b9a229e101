#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use shiftminer::series::{Source, TimeSeries};
use shiftminer::sources::{HttpRequest, HttpResponse, Transport, TransportError};

pub fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
    (0..n).map(|i| start + Days::new(i as u64)).collect()
}

pub fn series(id: &str, values: Vec<f64>) -> TimeSeries {
    TimeSeries::original(id, Source::Synthetic, dates(values.len()), values, "").unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` samples: `shift` added from index `at` on, plus N(0, sigma^2) noise.
pub fn step_series(rng: &mut impl Rng, n: usize, at: usize, shift: f64, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i >= at { shift } else { 0.0 } + sigma * normal(rng))
        .collect()
}

/// Sum of squared deviations from the mean, computed directly.
pub fn naive_cost(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

pub fn naive_segmentation_cost(values: &[f64], boundaries: &[usize]) -> f64 {
    let mut start = 0;
    let mut total = 0.0;
    for &b in boundaries {
        total += naive_cost(&values[start..b]);
        start = b;
    }
    total
}

/// Every strictly increasing choice of `k` internal boundaries in
/// lexicographic order, segments at least `min_size` long.
pub fn all_segmentations(n: usize, k: usize, min_size: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, min_size: usize, start: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 0 {
            if n - start >= min_size {
                let mut b = acc.clone();
                b.push(n);
                out.push(b);
            }
            return;
        }
        for j in (start + min_size)..=n {
            if n - j < min_size * k {
                break;
            }
            acc.push(j);
            rec(n, k - 1, min_size, j, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, min_size, 0, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive minimizer; the first (lexicographically smallest) wins ties.
pub fn exhaustive_best(values: &[f64], k: usize, min_size: usize) -> Option<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for b in all_segmentations(values.len(), k, min_size) {
        let c = naive_segmentation_cost(values, &b);
        if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
            best = Some((b, c));
        }
    }
    best
}

/// Largest cost reduction of one split, by direct evaluation.
pub fn best_single_split(values: &[f64], min_size: usize) -> Option<(usize, f64)> {
    let whole = naive_cost(values);
    let mut best: Option<(usize, f64)> = None;
    for j in min_size..=values.len().saturating_sub(min_size) {
        let gain = whole - naive_cost(&values[..j]) - naive_cost(&values[j..]);
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((j, gain));
        }
    }
    best
}

/// Transport that replays a fixed script of outcomes, then repeats the last.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpResponse, TransportError>>>,
    last: Mutex<Option<Result<HttpResponse, TransportError>>>,
    pub seen: Mutex<Vec<HttpRequest>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<HttpResponse, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            last: Mutex::new(None),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn statuses(codes: &[u16], body: &str) -> Self {
        Self::new(
            codes
                .iter()
                .map(|&status| Ok(HttpResponse { status, body: body.to_string() }))
                .collect(),
        )
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.seen.lock().unwrap().push(request.clone());
        let next = self.script.lock().unwrap().pop_front();
        let mut last = self.last.lock().unwrap();
        match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().expect("empty script"),
        }
    }
}

/// Relative path -> bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fig4_text() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fig4_completion.txt")).unwrap()
}

pub mod fuzz {
    use super::*;
    use indexmap::IndexMap;
    use shiftminer::sources::{eia, fred, trends, yahoo, EiaQuery, FredQuery, SourceError, TrendsQuery, YahooInterval, YahooQuery};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    pub fn fred_query() -> FredQuery {
        FredQuery { series_id: "UNRATE".into(), start_date: d("2007-01-01"), end_date: d("2013-01-01") }
    }

    pub fn yahoo_query() -> YahooQuery {
        YahooQuery { ticker: "^GSPC".into(), start_date: d("2020-01-01"), end_date: d("2020-03-01"), interval: YahooInterval::Daily }
    }

    pub fn trends_query() -> TrendsQuery {
        TrendsQuery { keyword: "world cup".into(), geo: Some("US".into()), start_date: d("2018-01-01"), end_date: d("2018-12-31") }
    }

    pub fn eia_query() -> EiaQuery {
        let mut params = IndexMap::new();
        params.insert("frequency".into(), "daily".into());
        params.insert("start".into(), "2017-09-01".into());
        params.insert("end".into(), "2017-09-10".into());
        EiaQuery { api_route: "electricity/rto/daily-region-data/data".into(), params }
    }

    pub fn fred_body() -> String {
        let obs: Vec<String> = (1..=12)
            .map(|m| format!(r#"{{"date":"2008-{m:02}-01","value":"{}.{m}"}}"#, 4 + m / 4))
            .collect();
        format!(r#"{{"units":"lin","observations":[{}]}}"#, obs.join(","))
    }

    pub fn yahoo_body() -> String {
        let ts: Vec<String> = (0..10).map(|i| (1577975400 + i * 86400).to_string()).collect();
        let close: Vec<String> = (0..10).map(|i| format!("{}.25", 3200 + i * 7)).collect();
        format!(
            r#"{{"chart":{{"result":[{{"timestamp":[{}],"indicators":{{"quote":[{{"close":[{}]}}]}}}}],"error":null}}}}"#,
            ts.join(","),
            close.join(",")
        )
    }

    pub fn trends_body() -> String {
        let pts: Vec<String> = (0..10)
            .map(|i| format!(r#"{{"time":"{}","value":[{}],"hasData":[true]}}"#, 1514764800 + i * 604800, 10 + i * 9))
            .collect();
        format!(")]}}',\n{{\"default\":{{\"timelineData\":[{}]}}}}", pts.join(","))
    }

    pub fn eia_body() -> String {
        let mut rows = Vec::new();
        for r in ["PJM", "ERCO"] {
            for day in 1..=6 {
                rows.push(format!(
                    r#"{{"period":"2017-09-{day:02}","respondent":"{r}","respondent-name":"{r} grid","value":{},"value-units":"MWh"}}"#,
                    1000 + day * 13
                ));
            }
        }
        format!(r#"{{"response":{{"total":"{}","data":[{}]}}}}"#, rows.len(), rows.join(","))
    }

    const TOKENS: [&str; 14] = [
        "NaN", "null", "\".\"", "\"\"", "1e999", "-", "[]", "{}", "\"2008-13-45\"", "-1e308", "true", "\"NaN\"", "0", "\"2008-01-01\"",
    ];

    /// One random structural or lexical corruption of `body`.
    pub fn mutate(body: &str, rng: &mut impl Rng) -> String {
        let mut b: Vec<char> = body.chars().collect();
        let rounds = rng.random_range(1..=3);
        for _ in 0..rounds {
            if b.is_empty() {
                break;
            }
            let i = rng.random_range(0..b.len());
            match rng.random_range(0..7) {
                0 => b.truncate(i),
                1 => b[i] = rng.random_range(b' '..=b'~') as char,
                2 => {
                    let j = (i + rng.random_range(1..20)).min(b.len());
                    b.drain(i..j);
                }
                3 => {
                    let j = (i + rng.random_range(1..40)).min(b.len());
                    let dup: Vec<char> = b[i..j].to_vec();
                    b.splice(i..i, dup);
                }
                4 => {
                    // replace the value token that starts after the next ':' or ','
                    let s: String = b.iter().collect();
                    if let Some(off) = s[s.char_indices().nth(i).map_or(s.len(), |(p, _)| p)..].find([':', ',']) {
                        let start = s.char_indices().nth(i).map_or(s.len(), |(p, _)| p) + off + 1;
                        let end = s[start..].find([',', '}', ']']).map_or(s.len(), |e| start + e);
                        let tok = TOKENS[rng.random_range(0..TOKENS.len())];
                        let out = format!("{}{}{}", &s[..start], tok, &s[end..]);
                        b = out.chars().collect();
                    }
                }
                5 => {
                    // swap two digits, which reorders dates and changes values
                    let digits: Vec<usize> = (0..b.len()).filter(|&k| b[k].is_ascii_digit()).collect();
                    if digits.len() >= 2 {
                        let x = digits[rng.random_range(0..digits.len())];
                        let y = digits[rng.random_range(0..digits.len())];
                        b.swap(x, y);
                    }
                }
                _ => b.insert(i, ['"', '{', '}', '[', ']', ',', ':', '\\'][rng.random_range(0..8)]),
            }
        }
        b.into_iter().collect()
    }

    #[derive(Debug, Default)]
    pub struct FuzzTally {
        pub cases: usize,
        pub valid: usize,
        pub parse_errors: usize,
        pub empty: usize,
        /// Anything else: wrong error kind or an invalid series.
        pub violations: Vec<String>,
    }

    fn check(tally: &mut FuzzTally, body: &str, result: Result<Vec<TimeSeries>, SourceError>) {
        tally.cases += 1;
        match result {
            Ok(list) => {
                for s in &list {
                    let rebuilt = TimeSeries::new(
                        s.id(), s.source(), s.timestamps().to_vec(), s.values().to_vec(), s.stage(), s.provenance().cloned(), s.comment(),
                    );
                    if rebuilt.is_err() || s.len() < 2 {
                        tally.violations.push(format!("invalid series from {body:?}"));
                    }
                }
                if list.is_empty() {
                    tally.violations.push(format!("Ok with no series from {body:?}"));
                }
                tally.valid += 1;
            }
            Err(SourceError::ParseError(_)) => tally.parse_errors += 1,
            Err(SourceError::EmptyResult(_)) => tally.empty += 1,
            Err(e) => tally.violations.push(format!("{e:?} from {body:?}")),
        }
    }

    /// Feeds `cases` corrupted bodies to the parser of `source`.
    pub fn run(source: Source, cases: usize, seed: u64) -> FuzzTally {
        let mut r = rng(seed);
        let mut tally = FuzzTally::default();
        let (fq, yq, tq, eq) = (fred_query(), yahoo_query(), trends_query(), eia_query());
        let base = match source {
            Source::Fred => fred_body(),
            Source::Yahoo => yahoo_body(),
            Source::Trends => trends_body(),
            Source::Eia => eia_body(),
            Source::Synthetic => unreachable!(),
        };
        for _ in 0..cases {
            let body = mutate(&base, &mut r);
            let result = match source {
                Source::Fred => fred::parse(&body, &fq, "").map(|s| vec![s]),
                Source::Yahoo => yahoo::parse(&body, &yq, "").map(|s| vec![s]),
                Source::Trends => trends::parse(&body, &tq, "").map(|s| vec![s]),
                Source::Eia => eia::parse_page(&body).and_then(|p| eia::assemble(p.rows, &eq, "")),
                Source::Synthetic => unreachable!(),
            };
            check(&mut tally, &body, result);
        }
        tally
    }
}

/// Backend that returns canned completions in order and keeps the prompts.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, shiftminer::querygen::QuerygenError>>>,
    pub prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<Result<String, shiftminer::querygen::QuerygenError>>) -> Self {
        Self { replies: Mutex::new(replies.into()), prompts: Mutex::new(Vec::new()) }
    }
}

impl shiftminer::querygen::CompletionBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, shiftminer::querygen::QuerygenError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(shiftminer::querygen::QuerygenError::BackendFailure("script exhausted".into())))
    }

    fn info(&self) -> shiftminer::querygen::BackendInfo {
        shiftminer::querygen::BackendInfo { name: "scripted".into(), max_prompt_chars: usize::MAX }
    }
}

/// A fenced Python list of `count` FRED queries with ids `ID{offset}..`.
pub fn fred_completion(offset: usize, count: usize) -> String {
    let items: Vec<String> = (offset..offset + count)
        .map(|i| {
            format!(
                "    {{'series_id': 'ID{i}', 'start_date': '2001-01-01', 'end_date': '2005-06-01', 'comment': 'case {i}'}},"
            )
        })
        .collect();
    format!("Here are the queries:\n```python\nqueries = [\n{}\n]\n```\n", items.join("\n"))
}

pub mod query_fuzz {
    use super::*;
    use shiftminer::querygen::{bind_queries, extract_query_objects};
    use shiftminer::sources::validate_query;

    #[derive(Debug, Default)]
    pub struct Tally {
        pub cases: usize,
        pub extracted: usize,
        pub accepted: usize,
        pub rejected: usize,
        pub no_queries: usize,
        pub violations: Vec<String>,
    }

    /// Mutates a mixed FRED/EIA completion and checks that whatever is
    /// accepted validates and that nothing is lost between the two lists.
    pub fn run(cases: usize, seed: u64) -> Tally {
        let mut r = rng(seed);
        let base = format!("{}\n{}", fig4_text(), fred_completion(0, 8));
        let mut t = Tally::default();
        for _ in 0..cases {
            let text = super::fuzz::mutate(&base, &mut r);
            t.cases += 1;
            match extract_query_objects(&text) {
                Ok(raw) => {
                    let n = raw.len();
                    let out = bind_queries(raw, None);
                    t.extracted += n;
                    t.accepted += out.accepted.len();
                    t.rejected += out.rejected.len();
                    if out.accepted.len() + out.rejected.len() != n {
                        t.violations.push(format!("partition lost objects in {text:?}"));
                    }
                    for q in &out.accepted {
                        if let Err(reasons) = validate_query(q) {
                            t.violations.push(format!("accepted invalid {q:?}: {reasons:?}"));
                        }
                    }
                }
                Err(shiftminer::querygen::QuerygenError::NoQueriesFound) => t.no_queries += 1,
                Err(e) => t.violations.push(format!("unexpected {e:?}")),
            }
        }
        t
    }
}
