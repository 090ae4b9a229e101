//! Orchestration: queries, collection, pruning, augmentation and the
//! parent-level split, with a manifest kept in sync after every stage.
//!
//! Every stage reads its input back from the dataset store, so running the
//! stages one at a time from the CLI gives the same tree as [`run`].

mod manifest;
pub mod metrics;
mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augment::{augment_set, AugmentConfig};
use crate::changepoint::{prune_detailed, DetectorConfig};
use crate::querygen::{
    self, bind_queries, extract_query_objects, source_profile, CatalogEntry, CompletionBackend,
    GenerateConfig, LiveBackend, QuerygenError, RecordBackend, ReplayBackend,
};
use crate::series::{DatasetStore, Source, Stage, StoreError, TimeSeries};
use crate::sources::transport::make_transport;
use crate::sources::{
    dedup_queries, Clock, Credentials, Fetcher, SourceError, SourceQuery, SystemClock, Transport,
    TransportError, TransportMode, VirtualClock,
};

pub use manifest::{report, DatasetManifest, ReportFormat};
pub use metrics::{mae_coverage, mse, mse_variance, MetricError, QuantileForecast};
pub use split::{family_sizes, split_parents, split_train_test, SplitError};

pub const CONFIG_FILE: &str = "config.json";
pub const QUERIES_FILE: &str = "queries.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const REPORT_FILE: &str = "report.txt";
pub const CATALOG_FILE: &str = "catalog.json";

/// `created_at` stamped in replay mode unless the config sets one, so that
/// replayed trees are byte-identical.
pub const REPLAY_EPOCH: &str = "1970-01-01T00:00:00Z";

fn default_transport() -> TransportMode {
    TransportMode::Replay
}
fn default_ratio() -> f64 {
    0.8
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("data")
}
fn default_fixtures_dir() -> PathBuf {
    PathBuf::from("fixtures")
}
fn default_query_count() -> usize {
    50
}
fn default_max_rounds() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset_name: String,
    pub source: Source,
    /// Pre-written queries; skips generation when set.
    #[serde(default)]
    pub query_file: Option<PathBuf>,
    #[serde(default = "default_transport")]
    pub transport_mode: TransportMode,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// `augment.master_seed` is ignored; the pipeline seed is used.
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_fixtures_dir")]
    pub fixtures_dir: PathBuf,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_query_count")]
    pub query_count: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Forces the number of training parents instead of `round(ratio * n)`.
    #[serde(default)]
    pub train_parents: Option<usize>,
    #[serde(default)]
    pub created_at: Option<String>,
    /// Run the source-discovery prompt and write `catalog.json`.
    #[serde(default)]
    pub discover: bool,
}

impl PipelineConfig {
    pub fn new(dataset_name: &str, source: Source) -> Self {
        Self {
            dataset_name: dataset_name.into(),
            source,
            query_file: None,
            transport_mode: default_transport(),
            detector: DetectorConfig::default(),
            augment: AugmentConfig::default(),
            split_ratio: default_ratio(),
            master_seed: 0,
            output_dir: default_output_dir(),
            fixtures_dir: default_fixtures_dir(),
            domain: String::new(),
            description: String::new(),
            query_count: default_query_count(),
            max_rounds: default_max_rounds(),
            train_parents: None,
            created_at: None,
            discover: false,
        }
    }

    /// Reads a JSON config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let err = |m: String| PipelineError::config(format!("{}: {m}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.output_dir = resolve(&cfg.output_dir);
        cfg.fixtures_dir = resolve(&cfg.fixtures_dir);
        cfg.query_file = cfg.query_file.as_deref().map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::config(m));
        if self.dataset_name.is_empty()
            || !self
                .dataset_name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || self.dataset_name.starts_with('.')
        {
            return bad(format!("invalid dataset_name {:?}", self.dataset_name));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} is not in (0, 1)", self.split_ratio));
        }
        if self.source == Source::Synthetic && self.query_file.is_none() {
            return bad("synthetic datasets need a query_file".into());
        }
        if self.query_count == 0 || self.max_rounds == 0 {
            return bad("query_count and max_rounds must be positive".into());
        }
        self.detector
            .validate()
            .map_err(|e| PipelineError::config(e.to_string()))?;
        self.augment
            .validate()
            .map_err(|e| PipelineError::config(e.to_string()))?;
        Ok(())
    }

    /// The copy kept inside the dataset directory: machine-specific paths
    /// are dropped so trees from different locations compare equal.
    fn stored(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(obj) = &mut v {
            for key in ["output_dir", "fixtures_dir", "query_file"] {
                obj.remove(key);
            }
        }
        v
    }

    fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            master_seed: self.master_seed,
            ..self.augment.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStage {
    Config,
    Explore,
    Queries,
    Collect,
    Prune,
    Augment,
    Split,
    Manifest,
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PipelineStage::Config => "config",
            PipelineStage::Explore => "explore",
            PipelineStage::Queries => "queries",
            PipelineStage::Collect => "collect",
            PipelineStage::Prune => "prune",
            PipelineStage::Augment => "augment",
            PipelineStage::Split => "split",
            PipelineStage::Manifest => "manifest",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Collection,
    NoShifts,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Collection => 3,
            ErrorKind::NoShifts => 4,
            ErrorKind::Io => 5,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: PipelineStage,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: PipelineStage, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(PipelineStage::Config, ErrorKind::Config, message)
    }

    fn io(stage: PipelineStage, e: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Io, e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

fn store_err(stage: PipelineStage) -> impl Fn(StoreError) -> PipelineError {
    move |e| PipelineError::io(stage, e)
}

fn write_json(path: &Path, value: &impl Serialize, stage: PipelineStage) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| PipelineError::io(stage, format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: PipelineStage) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::io(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::io(stage, format!("{}: {e}", path.display())))
}

/// A configured pipeline with its transport, clock and completion backend.
pub struct Pipeline {
    config: PipelineConfig,
    store: DatasetStore,
    transport: Option<Arc<dyn Transport>>,
    clock: Option<Arc<dyn Clock>>,
    backend: Option<Arc<dyn CompletionBackend>>,
    credentials: Option<Credentials>,
    force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let store = DatasetStore::new(&config.output_dir, &config.dataset_name);
        Ok(Self {
            config,
            store,
            transport: None,
            clock: None,
            backend: None,
            credentials: None,
            force: false,
        })
    }

    /// Reopens a dataset from the config stored in its directory.
    pub fn open(output_dir: &Path, dataset: &str) -> Result<Self, PipelineError> {
        let path = output_dir.join(dataset).join(CONFIG_FILE);
        let mut value: Value = read_json(&path, PipelineStage::Config)
            .map_err(|e| PipelineError::config(e.message))?;
        if let Value::Object(obj) = &mut value {
            obj.insert("output_dir".into(), json!(output_dir));
        }
        let config: PipelineConfig = serde_json::from_value(value)
            .map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
        Self::new(config)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut PipelineConfig {
        &mut self.config
    }

    pub fn store(&self) -> &DatasetStore {
        &self.store
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn with_backend(mut self, backend: Arc<dyn CompletionBackend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_credentials(mut self, credentials: Credentials) -> Self {
        self.credentials = Some(credentials);
        self
    }

    /// Allow wiping an existing dataset directory.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    fn replay(&self) -> bool {
        self.config.transport_mode == TransportMode::Replay
    }

    fn backend(&self) -> Result<Arc<dyn CompletionBackend>, QuerygenError> {
        if let Some(b) = &self.backend {
            return Ok(b.clone());
        }
        Ok(match self.config.transport_mode {
            TransportMode::Replay => Arc::new(ReplayBackend::new(&self.config.fixtures_dir)),
            TransportMode::Live => Arc::new(LiveBackend::from_env()?),
            TransportMode::Record => Arc::new(RecordBackend::new(
                LiveBackend::from_env()?,
                &self.config.fixtures_dir,
            )),
        })
    }

    fn fetcher(&self) -> Result<Fetcher, TransportError> {
        let transport = match &self.transport {
            Some(t) => t.clone(),
            None => make_transport(self.config.transport_mode, &self.config.fixtures_dir)?,
        };
        // replayed responses need no pacing in wall-clock time
        let clock: Arc<dyn Clock> = match (&self.clock, self.replay()) {
            (Some(c), _) => c.clone(),
            (None, true) => Arc::new(VirtualClock::new()),
            (None, false) => Arc::new(SystemClock::new()),
        };
        let credentials = match (&self.credentials, self.replay()) {
            (Some(c), _) => c.clone(),
            (None, true) => Credentials::replay(),
            (None, false) => Credentials::from_env(),
        };
        Ok(Fetcher::new(transport, clock, credentials))
    }

    /// All stages in order; returns the final manifest.
    pub fn run(&self) -> Result<DatasetManifest, PipelineError> {
        self.explore();
        self.collect_stage()?;
        self.prune_stage()?;
        self.augment_stage()?;
        self.split_stage(self.config.split_ratio, self.config.master_seed)?;
        self.load_manifest()
    }

    /// Optional discovery prompt; failures are logged, never fatal.
    pub fn explore(&self) -> Option<Vec<CatalogEntry>> {
        if !self.config.discover {
            return None;
        }
        let result = self.backend().and_then(|b| querygen::discover_sources(b.as_ref(), 2));
        match result {
            Ok(entries) => {
                let path = self.config.output_dir.join(CATALOG_FILE);
                let written = fs::create_dir_all(&self.config.output_dir)
                    .map_err(|e| e.to_string())
                    .and_then(|_| {
                        write_json(&path, &entries, PipelineStage::Explore).map_err(|e| e.to_string())
                    });
                if let Err(e) = written {
                    log::warn!("explore: cannot write catalog: {e}");
                }
                Some(entries)
            }
            Err(e) => {
                log::warn!("explore: {e}");
                None
            }
        }
    }

    /// Loads or generates queries; returns them with "external"/"generated"
    /// and the number of rejected query objects.
    pub fn queries(&self) -> Result<(Vec<SourceQuery>, &'static str, usize), PipelineError> {
        let stage = PipelineStage::Queries;
        if let Some(path) = &self.config.query_file {
            let text = fs::read_to_string(path)
                .map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
            let raw = extract_query_objects(&text)
                .map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
            let hint = (self.config.source != Source::Synthetic).then_some(self.config.source);
            let bound = bind_queries(raw, hint);
            for (obj, reason) in &bound.rejected {
                log::warn!("rejected query {obj}: {reason}");
            }
            let queries = dedup_queries(bound.accepted);
            if queries.is_empty() {
                return Err(PipelineError::config(format!(
                    "{}: no valid queries",
                    path.display()
                )));
            }
            return Ok((queries, "external", bound.rejected.len()));
        }
        let collection = |e: QuerygenError| PipelineError::new(stage, ErrorKind::Collection, e.to_string());
        let backend = self.backend().map_err(collection)?;
        let generated = querygen::generate_queries_detailed(
            self.config.source,
            backend.as_ref(),
            GenerateConfig {
                query_count: self.config.query_count,
                max_rounds: self.config.max_rounds,
            },
        )
        .map_err(collection)?;
        Ok((generated.queries, "generated", generated.rejected))
    }

    fn prepare_root(&self) -> Result<(), PipelineError> {
        let root = self.store.root();
        if root.exists() {
            if !self.force {
                return Err(PipelineError::config(format!(
                    "{} exists; pass --force to replace it",
                    root.display()
                )));
            }
            fs::remove_dir_all(root).map_err(|e| PipelineError::io(PipelineStage::Collect, e))?;
        }
        Ok(())
    }

    /// Queries plus collection; writes the Original stage, config and queries.
    pub fn collect_stage(&self) -> Result<(), PipelineError> {
        let stage = PipelineStage::Collect;
        let (queries, origin, rejected) = self.queries()?;
        let fetcher = self
            .fetcher()
            .map_err(|e| PipelineError::new(stage, ErrorKind::Collection, e.to_string()))?;
        let results: Vec<Result<Vec<TimeSeries>, SourceError>> =
            queries.par_iter().map(|q| fetcher.fetch(q)).collect();

        let mut collected: Vec<TimeSeries> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut diagnostics = BTreeMap::new();
        let mut first_error = None;
        for (query, result) in queries.iter().zip(results) {
            match result {
                Ok(series) => {
                    for s in series {
                        if seen.insert(s.id().to_string()) {
                            collected.push(s);
                        } else {
                            *diagnostics.entry("duplicate_series".to_string()).or_insert(0) += 1;
                        }
                    }
                }
                Err(SourceError::Transport(e @ TransportError::FixtureMissing(_))) => {
                    return Err(PipelineError::new(
                        stage,
                        ErrorKind::Collection,
                        format!("{query}: {e}"),
                    ));
                }
                Err(e) => {
                    log::warn!("{query}: {e}");
                    *diagnostics.entry("fetch_failed".to_string()).or_insert(0) += 1;
                    first_error.get_or_insert_with(|| format!("{query}: {e}"));
                }
            }
        }
        if collected.is_empty() {
            return Err(PipelineError::new(
                stage,
                ErrorKind::Collection,
                format!(
                    "no series collected from {} queries{}",
                    queries.len(),
                    first_error.map(|e| format!(" (first failure: {e})")).unwrap_or_default()
                ),
            ));
        }
        if rejected > 0 {
            diagnostics.insert("queries_rejected".into(), rejected);
        }

        self.prepare_root()?;
        self.store
            .write_stage(Stage::Original, &collected)
            .map_err(store_err(stage))?;
        let root = self.store.root();
        write_json(&root.join(CONFIG_FILE), &self.config.stored(), stage)?;
        let query_json: Vec<Value> = queries.iter().map(SourceQuery::to_json).collect();
        write_json(&root.join(QUERIES_FILE), &query_json, stage)?;

        let mut manifest = self.fresh_manifest();
        manifest.queries = origin.into();
        manifest.diagnostics = diagnostics;
        self.finish_manifest(manifest)?;
        Ok(())
    }

    /// Keeps H1 series; zero survivors is an error and writes nothing.
    pub fn prune_stage(&self) -> Result<usize, PipelineError> {
        let stage = PipelineStage::Prune;
        let originals = self
            .store
            .read_stage(Stage::Original)
            .map_err(store_err(stage))?;
        let outcome = prune_detailed(&originals, &self.config.detector);
        if outcome.kept.is_empty() {
            return Err(PipelineError::new(
                stage,
                ErrorKind::NoShifts,
                format!("none of {} series shows a change point", originals.len()),
            ));
        }
        for stale in [Stage::Augmented, Stage::Pruned] {
            self.store.remove_stage(stale).map_err(store_err(stage))?;
        }
        let _ = fs::remove_file(self.store.root().join(SPLITS_FILE));
        self.store
            .write_stage(Stage::Pruned, &outcome.kept)
            .map_err(store_err(stage))?;
        let mut manifest = self.load_manifest()?;
        manifest.diagnostics.remove("prune_failed");
        if !outcome.failed.is_empty() {
            manifest
                .diagnostics
                .insert("prune_failed".into(), outcome.failed.len());
        }
        manifest.count_train = None;
        manifest.count_test = None;
        self.finish_manifest(manifest)?;
        Ok(outcome.kept.len())
    }

    pub fn augment_stage(&self) -> Result<usize, PipelineError> {
        let stage = PipelineStage::Augment;
        let pruned = self
            .store
            .read_stage(Stage::Pruned)
            .map_err(store_err(stage))?;
        let outcome = augment_set(&pruned, &self.config.augment_config(), &self.config.detector)
            .map_err(|e| PipelineError::new(stage, ErrorKind::Config, e.to_string()))?;
        for d in &outcome.diagnostics {
            log::warn!("augment: {d}");
        }
        self.store
            .write_stage(Stage::Augmented, &outcome.series)
            .map_err(store_err(stage))?;
        let mut manifest = self.load_manifest()?;
        for key in ["augment_unverified", "augment_skipped"] {
            manifest.diagnostics.remove(key);
        }
        if outcome.unverified > 0 {
            manifest
                .diagnostics
                .insert("augment_unverified".into(), outcome.unverified);
        }
        if !outcome.diagnostics.is_empty() {
            manifest
                .diagnostics
                .insert("augment_skipped".into(), outcome.diagnostics.len());
        }
        self.finish_manifest(manifest)?;
        Ok(outcome.series.len())
    }

    /// Splits pruned parents and writes `splits.json`: training samples are
    /// the augmentations of training parents, test samples are the test
    /// parents themselves.
    pub fn split_stage(&self, ratio: f64, seed: u64) -> Result<(usize, usize), PipelineError> {
        let stage = PipelineStage::Split;
        let err = |e: SplitError| PipelineError::new(stage, ErrorKind::Config, e.to_string());
        let parents = self.stage_ids(Stage::Pruned, stage)?;
        let (train_parents, test_parents) =
            split_parents(&parents, ratio, seed, self.config.train_parents).map_err(err)?;
        let augmented = self.store.read_stage(Stage::Augmented).unwrap_or_default();
        let train_set: std::collections::BTreeSet<&str> =
            train_parents.iter().map(String::as_str).collect();
        let train: Vec<&str> = augmented
            .iter()
            .filter(|s| train_set.contains(s.parent_id()))
            .map(TimeSeries::id)
            .collect();
        let splits = json!({
            "seed": seed,
            "ratio": ratio,
            "train_parents": train_parents,
            "test_parents": test_parents,
            "train": train,
            "test": test_parents,
        });
        write_json(&self.store.root().join(SPLITS_FILE), &splits, stage)?;
        let mut manifest = self.load_manifest()?;
        manifest.count_train = Some(train.len());
        manifest.count_test = Some(test_parents.len());
        self.finish_manifest(manifest)?;
        Ok((train.len(), test_parents.len()))
    }

    fn stage_ids(&self, stage: Stage, label: PipelineStage) -> Result<Vec<String>, PipelineError> {
        let dir = self.store.stage_dir(stage);
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| PipelineError::io(label, format!("{}: {e}", dir.display())))? {
            let path = entry.map_err(|e| PipelineError::io(label, e))?.path();
            if path.extension().is_some_and(|x| x == "csv") {
                if let Some(stem) = path.file_stem() {
                    ids.push(stem.to_string_lossy().into_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn created_at(&self) -> String {
        match (&self.config.created_at, self.replay()) {
            (Some(t), _) => t.clone(),
            (None, true) => REPLAY_EPOCH.into(),
            (None, false) => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    fn fresh_manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::empty(&self.config.dataset_name, self.config.master_seed, &self.created_at());
        m.domain = self.config.domain.clone();
        m.description = self.config.description.clone();
        if m.domain.is_empty() || m.description.is_empty() {
            if let Some(entry) = self.catalog_entry() {
                if m.domain.is_empty() {
                    m.domain = entry.domain;
                }
                if m.description.is_empty() {
                    m.description = entry.description;
                }
            }
        }
        m
    }

    fn catalog_entry(&self) -> Option<CatalogEntry> {
        let path = self.config.output_dir.join(CATALOG_FILE);
        let entries: Vec<CatalogEntry> = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
        let name = source_profile(self.config.source)?.source_name.to_lowercase();
        entries
            .into_iter()
            .find(|e| e.name.to_lowercase().contains(&name))
    }

    pub fn load_manifest(&self) -> Result<DatasetManifest, PipelineError> {
        read_json(&self.store.manifest_path(), PipelineStage::Manifest)
    }

    /// Recounts the stage directories and writes manifest and report.
    fn finish_manifest(&self, mut manifest: DatasetManifest) -> Result<(), PipelineError> {
        let stage = PipelineStage::Manifest;
        let originals = self
            .store
            .read_stage(Stage::Original)
            .map_err(store_err(stage))?;
        manifest.count_original = originals.len();
        manifest.length_min = originals.iter().map(TimeSeries::len).min().unwrap_or(0);
        manifest.length_max = originals.iter().map(TimeSeries::len).max().unwrap_or(0);
        let count = |s: Stage| -> Result<usize, PipelineError> {
            if self.store.stage_dir(s).exists() {
                Ok(self.stage_ids(s, stage)?.len())
            } else {
                Ok(0)
            }
        };
        manifest.count_pruned = count(Stage::Pruned)?;
        manifest.count_augmented = count(Stage::Augmented)?;
        manifest.augment_factor = self
            .store
            .stage_dir(Stage::Augmented)
            .exists()
            .then_some(self.config.augment.factor);
        manifest.seed = self.config.master_seed;
        if let Err(e) = manifest.validate() {
            log::warn!("manifest: {e}");
        }
        write_json(&self.store.manifest_path(), &manifest, stage)?;
        fs::write(
            self.store.root().join(REPORT_FILE),
            report(&manifest, ReportFormat::Text),
        )
        .map_err(|e| PipelineError::io(stage, e))?;
        Ok(())
    }
}

/// Builds a pipeline for `config` and runs every stage.
pub fn run(config: PipelineConfig) -> Result<DatasetManifest, PipelineError> {
    Pipeline::new(config)?.run()
}
