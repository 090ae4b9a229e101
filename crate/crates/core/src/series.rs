//! Time-series values, their metadata, and the on-disk dataset layout.
//!
//! A series is stored as `<id>.csv` (header `timestamp,value`) with an
//! optional `<id>.meta.json` sidecar carrying everything that is not a
//! sample: source, stage, provenance and the free-text comment.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where a series came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Fred,
    Eia,
    Yahoo,
    Trends,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Fred => "FRED",
            Source::Eia => "EIA",
            Source::Yahoo => "YAHOO",
            Source::Trends => "TRENDS",
            Source::Synthetic => "SYNTHETIC",
        }
    }

    /// Parses a case-insensitive source name (`fred`, `EIA`, ...).
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "FRED" => Some(Source::Fred),
            "EIA" => Some(Source::Eia),
            "YAHOO" => Some(Source::Yahoo),
            "TRENDS" => Some(Source::Trends),
            "SYNTHETIC" => Some(Source::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pipeline stage a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Original,
    Pruned,
    Augmented,
}

impl Stage {
    /// Directory name used by the dataset layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Original => "original",
            Stage::Pruned => "pruned",
            Stage::Augmented => "augmented",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugmentMethod {
    TimeWarp,
    WindowWarp,
    WindowSlice,
}

/// Lineage of an augmented series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub parent_id: String,
    pub method: AugmentMethod,
    pub seed: u64,
    pub shift_verified: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("series needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("{timestamps} timestamps but {values} values")]
    LengthMismatch { timestamps: usize, values: usize },
    #[error("timestamps not strictly increasing at row {0}")]
    NonMonotonicTimestamps(usize),
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("stage/provenance mismatch: augmented series must carry provenance and others must not")]
    ProvenanceMismatch,
    #[error("empty series id")]
    EmptyId,
}

/// One univariate series. Immutable once built; every constructor checks
/// the invariants, so a `TimeSeries` value is always valid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: String,
    source: Source,
    timestamps: Vec<NaiveDate>,
    values: Vec<f64>,
    stage: Stage,
    provenance: Option<Provenance>,
    comment: String,
}

impl TimeSeries {
    pub fn new(
        id: impl Into<String>,
        source: Source,
        timestamps: Vec<NaiveDate>,
        values: Vec<f64>,
        stage: Stage,
        provenance: Option<Provenance>,
        comment: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        let id = id.into();
        if id.is_empty() {
            return Err(SeriesError::EmptyId);
        }
        if timestamps.len() != values.len() {
            return Err(SeriesError::LengthMismatch {
                timestamps: timestamps.len(),
                values: values.len(),
            });
        }
        if values.len() < 2 {
            return Err(SeriesError::TooShort(values.len()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SeriesError::NonMonotonicTimestamps(i + 1));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite(i));
        }
        if (stage == Stage::Augmented) != provenance.is_some() {
            return Err(SeriesError::ProvenanceMismatch);
        }
        Ok(Self {
            id,
            source,
            timestamps,
            values,
            stage,
            provenance,
            comment: comment.into(),
        })
    }

    /// Convenience constructor for an `Original` series without provenance.
    pub fn original(
        id: impl Into<String>,
        source: Source,
        timestamps: Vec<NaiveDate>,
        values: Vec<f64>,
        comment: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        Self::new(id, source, timestamps, values, Stage::Original, None, comment)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn comment(&self) -> &str {
        &self.comment
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: a valid series has at least two samples.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Id of the pruned parent for augmented series, own id otherwise.
    pub fn parent_id(&self) -> &str {
        self.provenance
            .as_ref()
            .map(|p| p.parent_id.as_str())
            .unwrap_or(&self.id)
    }

    /// Copy of this series moved to the `Pruned` stage.
    pub fn to_pruned(&self) -> Self {
        Self {
            stage: Stage::Pruned,
            provenance: None,
            ..self.clone()
        }
    }

    /// Builds an augmented child on the parent's timestamp grid.
    pub fn derive_augmented(
        &self,
        id: impl Into<String>,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self, SeriesError> {
        Self::new(
            id,
            self.source,
            self.timestamps.clone(),
            values,
            Stage::Augmented,
            Some(provenance),
            self.comment.clone(),
        )
    }

    /// Same metadata, new values on the same grid.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, SeriesError> {
        Self::new(
            self.id.clone(),
            self.source,
            self.timestamps.clone(),
            values,
            self.stage,
            self.provenance.clone(),
            self.comment.clone(),
        )
    }
}

/// Builds the canonical id `<source>-<native id>-<start>-<end>`.
///
/// Characters outside `[A-Za-z0-9_.]` in the native id are replaced by `_`
/// so the id is always a safe file stem.
pub fn series_id(source: Source, native_id: &str, start: NaiveDate, end: NaiveDate) -> String {
    let native: String = native_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{}-{}-{}-{}", source.as_str(), native, start, end)
}

/// Affine rescale of values onto `[0, 1]`. Constant series map to 0.5.
pub fn min_max_normalize(series: &TimeSeries) -> TimeSeries {
    let (lo, hi) = series
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let values = if span > 0.0 && span.is_finite() {
        series
            .values()
            .iter()
            .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.5; series.len()]
    };
    series
        .with_values(values)
        .expect("normalized values are finite and length is unchanged")
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed series file {path}: {detail}")]
    MalformedFile { path: PathBuf, detail: String },
    #[error("{path}: fewer than 2 valid rows ({rows})")]
    TooShort { path: PathBuf, rows: usize },
    #[error("{path}: timestamps not strictly increasing at data row {row}")]
    NonMonotonicTimestamps { path: PathBuf, row: usize },
    #[error("invalid series metadata in {path}: {source}")]
    InvalidSeries { path: PathBuf, source: SeriesError },
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Sidecar record stored next to each series CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    id: String,
    source: Source,
    stage: Stage,
    #[serde(default)]
    provenance: Option<Provenance>,
    #[serde(default)]
    comment: String,
}

/// A loaded series plus the number of rows dropped for non-finite values.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub series: TimeSeries,
    pub dropped_rows: usize,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

/// Reads a `timestamp,value` CSV and, when present, its sidecar metadata.
///
/// Rows whose value parses but is not finite (`NaN`, `inf`) are dropped and
/// counted; anything that does not parse is a `MalformedFile`.
pub fn load_series(path: &Path) -> Result<Loaded, StoreError> {
    let malformed = |detail: String| StoreError::MalformedFile {
        path: path.to_path_buf(),
        detail,
    };
    let file = fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(io::BufReader::new(file));

    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(malformed(format!(
            "expected header `timestamp,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        if record.len() != 2 {
            return Err(malformed(format!("row {row}: expected 2 fields")));
        }
        let ts = NaiveDate::parse_from_str(record[0].trim(), "%Y-%m-%d")
            .map_err(|e| malformed(format!("row {row}: bad timestamp: {e}")))?;
        let value: f64 = record[1]
            .trim()
            .parse()
            .map_err(|e| malformed(format!("row {row}: bad value: {e}")))?;
        if !value.is_finite() {
            dropped += 1;
            continue;
        }
        if let Some(prev) = timestamps.last() {
            if *prev >= ts {
                return Err(StoreError::NonMonotonicTimestamps {
                    path: path.to_path_buf(),
                    row,
                });
            }
        }
        timestamps.push(ts);
        values.push(value);
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} non-finite rows", path.display());
    }
    if values.len() < 2 {
        return Err(StoreError::TooShort {
            path: path.to_path_buf(),
            rows: values.len(),
        });
    }

    let meta_path = sidecar_path(path);
    let meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| StoreError::io(&meta_path, e))?;
        let meta: Sidecar = serde_json::from_str(&text).map_err(|e| StoreError::MalformedFile {
            path: meta_path.clone(),
            detail: e.to_string(),
        })?;
        meta
    } else {
        Sidecar {
            id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            source: Source::Synthetic,
            stage: Stage::Original,
            provenance: None,
            comment: String::new(),
        }
    };

    let series = TimeSeries::new(
        meta.id,
        meta.source,
        timestamps,
        values,
        meta.stage,
        meta.provenance,
        meta.comment,
    )
    .map_err(|source| StoreError::InvalidSeries {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Loaded {
        series,
        dropped_rows: dropped,
    })
}

/// Writes `<dir>/<id>.csv` and `<dir>/<id>.meta.json`, returning the CSV path.
///
/// Values are written with Rust's shortest round-trip float formatting, so a
/// reload reproduces them bit for bit.
pub fn save_series(series: &TimeSeries, dir: &Path) -> Result<PathBuf, StoreError> {
    let csv_path = dir.join(format!("{}.csv", series.id()));
    let mut out = String::with_capacity(series.len() * 24 + 16);
    out.push_str("timestamp,value\n");
    for (ts, v) in series.timestamps().iter().zip(series.values()) {
        out.push_str(&format!("{ts},{v}\n"));
    }
    fs::write(&csv_path, out).map_err(|e| StoreError::io(&csv_path, e))?;

    let meta = Sidecar {
        id: series.id().to_string(),
        source: series.source(),
        stage: series.stage(),
        provenance: series.provenance().cloned(),
        comment: series.comment().to_string(),
    };
    let meta_path = sidecar_path(&csv_path);
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| StoreError::io(&meta_path, e))?;
    Ok(csv_path)
}

/// `<root>/<dataset>/` with one subdirectory per stage.
#[derive(Debug, Clone)]
pub struct DatasetStore {
    root: PathBuf,
}

impl DatasetStore {
    pub fn new(output_dir: &Path, dataset: &str) -> Self {
        Self {
            root: output_dir.join(dataset),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir_name())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// Replaces the stage directory with exactly `series`.
    ///
    /// Files are written to a scratch directory first and renamed into place,
    /// so a failure never leaves a half-written stage behind.
    pub fn write_stage(&self, stage: Stage, series: &[TimeSeries]) -> Result<(), StoreError> {
        fs::create_dir_all(&self.root).map_err(|e| StoreError::io(&self.root, e))?;
        let target = self.stage_dir(stage);
        let scratch = self.root.join(format!(".{}.partial", stage.dir_name()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch).map_err(|e| StoreError::io(&scratch, e))?;
        }
        fs::create_dir_all(&scratch).map_err(|e| StoreError::io(&scratch, e))?;
        let written = series
            .par_iter()
            .try_for_each(|s| save_series(s, &scratch).map(|_| ()));
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&scratch);
            return Err(e);
        }
        if target.exists() {
            fs::remove_dir_all(&target).map_err(|e| StoreError::io(&target, e))?;
        }
        fs::rename(&scratch, &target).map_err(|e| StoreError::io(&target, e))
    }

    /// Loads every series of a stage, sorted by id.
    pub fn read_stage(&self, stage: Stage) -> Result<Vec<TimeSeries>, StoreError> {
        let dir = self.stage_dir(stage);
        let mut paths = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))? {
            let path = entry.map_err(|e| StoreError::io(&dir, e))?.path();
            if path.extension().is_some_and(|ext| ext == "csv") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut out: Vec<TimeSeries> = paths
            .par_iter()
            .map(|p| load_series(p).map(|l| l.series))
            .collect::<Result<_, _>>()?;
        out.sort_by(|a, b| a.id().cmp(b.id()));
        Ok(out)
    }

    pub fn remove_stage(&self, stage: Stage) -> Result<(), StoreError> {
        let dir = self.stage_dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn daily(n: usize) -> Vec<NaiveDate> {
        (0..n)
            .map(|i| d(2020, 1, 1) + chrono::Days::new(i as u64))
            .collect()
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::original("s", Source::Synthetic, daily(values.len()), values, "").unwrap()
    }

    #[test]
    fn rejects_invariant_violations() {
        assert_eq!(
            TimeSeries::original("a", Source::Fred, daily(1), vec![1.0], "").unwrap_err(),
            SeriesError::TooShort(1)
        );
        assert_eq!(
            TimeSeries::original("a", Source::Fred, vec![d(2020, 1, 1); 2], vec![1.0, 2.0], "")
                .unwrap_err(),
            SeriesError::NonMonotonicTimestamps(1)
        );
        assert_eq!(
            TimeSeries::original("a", Source::Fred, daily(2), vec![1.0, f64::NAN], "")
                .unwrap_err(),
            SeriesError::NonFinite(1)
        );
        assert_eq!(
            TimeSeries::new("a", Source::Fred, daily(2), vec![1.0, 2.0], Stage::Augmented, None, "")
                .unwrap_err(),
            SeriesError::ProvenanceMismatch
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(min_max_normalize(&series(vec![0.0, 5.0, 10.0])).values(), &[0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&series(vec![3.0, 3.0, 3.0])).values(), &[0.5, 0.5, 0.5]);
        assert_eq!(min_max_normalize(&series(vec![2.0, 4.0])).values(), &[0.0, 1.0]);
    }

    #[test]
    fn id_format() {
        assert_eq!(
            series_id(Source::Fred, "UNRATE", d(2007, 1, 1), d(2013, 1, 1)),
            "FRED-UNRATE-2007-01-01-2013-01-01"
        );
        assert_eq!(
            series_id(Source::Eia, "electricity/rto PJM", d(2017, 9, 1), d(2018, 2, 28)),
            "EIA-electricity_rto_PJM-2017-09-01-2018-02-28"
        );
    }

    #[test]
    fn load_minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "timestamp,value\n2020-01-01,1.0\n2020-01-02,2.0\n").unwrap();
        let l = load_series(&p).unwrap();
        assert_eq!(l.series.len(), 2);
        assert_eq!(l.series.id(), "m");
        assert_eq!(l.dropped_rows, 0);
    }

    #[test]
    fn load_drops_nan_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.csv");
        let mut text = String::from("timestamp,value\n");
        for i in 0..10 {
            let v = if i == 4 { "NaN".to_string() } else { format!("{i}") };
            text.push_str(&format!("2020-01-{:02},{v}\n", i + 1));
        }
        fs::write(&p, text).unwrap();
        let l = load_series(&p).unwrap();
        assert_eq!(l.series.len(), 9);
        assert_eq!(l.dropped_rows, 1);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dup = dir.path().join("dup.csv");
        fs::write(&dup, "timestamp,value\n2020-01-01,1\n2020-01-01,2\n").unwrap();
        assert!(matches!(
            load_series(&dup),
            Err(StoreError::NonMonotonicTimestamps { .. })
        ));

        let header = dir.path().join("h.csv");
        fs::write(&header, "date,val\n2020-01-01,1\n2020-01-02,2\n").unwrap();
        assert!(matches!(load_series(&header), Err(StoreError::MalformedFile { .. })));

        let short = dir.path().join("s.csv");
        fs::write(&short, "timestamp,value\n2020-01-01,1\n2020-01-02,inf\n").unwrap();
        assert!(matches!(load_series(&short), Err(StoreError::TooShort { rows: 1, .. })));

        let garbage = dir.path().join("g.csv");
        fs::write(&garbage, "timestamp,value\n2020-01-01,abc\n2020-01-02,1\n").unwrap();
        assert!(matches!(load_series(&garbage), Err(StoreError::MalformedFile { .. })));
    }

    #[test]
    fn sidecar_persists_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let parent = series(vec![1.0, 2.0, 3.0]).to_pruned();
        let child = parent
            .derive_augmented(
                "s-aug0",
                vec![1.5, 2.0, 2.5],
                Provenance {
                    parent_id: "s".into(),
                    method: AugmentMethod::WindowSlice,
                    seed: 7,
                    shift_verified: true,
                },
            )
            .unwrap();
        let path = save_series(&child, dir.path()).unwrap();
        let meta = fs::read_to_string(dir.path().join("s-aug0.meta.json")).unwrap();
        assert!(meta.contains("\"parent_id\": \"s\""));
        assert!(meta.contains("WindowSlice"));
        assert_eq!(load_series(&path).unwrap().series, child);
    }

    #[test]
    fn save_into_missing_dir_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope").join("deeper");
        assert!(matches!(
            save_series(&series(vec![1.0, 2.0]), &missing),
            Err(StoreError::Io { .. })
        ));
    }
}
