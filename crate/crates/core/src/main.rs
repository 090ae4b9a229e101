use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::Value;

use shiftminer::changepoint::DetectorConfig;
use shiftminer::pipeline::{
    report, ErrorKind, Pipeline, PipelineConfig, PipelineError, PipelineStage, ReportFormat,
    CATALOG_FILE,
};
use shiftminer::querygen::{
    discover_sources, generate_queries_detailed, CompletionBackend, GenerateConfig, LiveBackend,
    RecordBackend, ReplayBackend,
};
use shiftminer::series::Source;
use shiftminer::sources::{SourceQuery, TransportMode};
use shiftminer::synthetic::{reference_set, write_fixture_set, REFERENCE_SETS};

#[derive(Parser)]
#[command(name = "shiftminer", version, about = "Mine time-series datasets with distributional shifts")]
struct Cli {
    /// live, replay or record
    #[arg(long, global = true, value_enum)]
    transport: Option<TransportMode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Fixture directory for replay and record modes.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Replace an existing dataset directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ask the model for candidate data sources; writes catalog.json.
    Discover {
        #[arg(long, default_value_t = 2)]
        rounds: usize,
    },
    /// Generate validated queries for one source.
    GenerateQueries {
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fetch the Original stage.
    Collect {
        #[arg(long)]
        config: PathBuf,
    },
    /// Keep the series with at least one change point.
    Prune {
        #[arg(long)]
        dataset: String,
    },
    /// Expand the pruned series.
    Augment {
        #[arg(long)]
        dataset: String,
    },
    /// Parent-level train/test split.
    Split {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Print the dataset's table row.
    Report {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        csv: bool,
    },
    /// Every stage in order.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write replayable fixture sets shaped like the reference collections.
    SynthFixtures {
        /// One of fred, worldcup, eia, yahoo, covid, or all.
        #[arg(long, default_value = "all")]
        set: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_error(message: impl Into<String>) -> PipelineError {
    PipelineError::new(PipelineStage::Config, ErrorKind::Config, message)
}

fn io_error(message: impl Into<String>) -> PipelineError {
    PipelineError::new(PipelineStage::Manifest, ErrorKind::Io, message)
}

impl Cli {
    fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("data"))
    }

    fn fixtures(&self) -> PathBuf {
        self.fixtures.clone().unwrap_or_else(|| PathBuf::from("fixtures"))
    }

    fn backend(&self) -> Result<Arc<dyn CompletionBackend>, PipelineError> {
        let err = |e: shiftminer::querygen::QuerygenError| config_error(e.to_string());
        Ok(match self.transport.unwrap_or(TransportMode::Replay) {
            TransportMode::Replay => Arc::new(ReplayBackend::new(self.fixtures())),
            TransportMode::Live => Arc::new(LiveBackend::from_env().map_err(err)?),
            TransportMode::Record => Arc::new(RecordBackend::new(
                LiveBackend::from_env().map_err(err)?,
                self.fixtures(),
            )),
        })
    }

    fn load_config(&self, path: &Path) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::load(path)?;
        if let Some(t) = self.transport {
            cfg.transport_mode = t;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(f) = &self.fixtures {
            cfg.fixtures_dir = f.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn open(&self, dataset: &str) -> Result<Pipeline, PipelineError> {
        let mut p = Pipeline::open(&self.output_dir(), dataset)?;
        if let Some(s) = self.seed {
            p.config_mut().master_seed = s;
        }
        Ok(p)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| io_error(format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Discover { rounds } => {
            let entries = discover_sources(cli.backend()?.as_ref(), *rounds)
                .map_err(|e| PipelineError::new(PipelineStage::Explore, ErrorKind::Collection, e.to_string()))?;
            let path = cli.output_dir().join(CATALOG_FILE);
            write_text(&path, &(serde_json::to_string_pretty(&entries).expect("serializes") + "\n"))?;
            println!("{} sources written to {}", entries.len(), path.display());
        }
        Command::GenerateQueries {
            source,
            count,
            rounds,
            out,
        } => {
            let source = Source::parse(source)
                .filter(|s| *s != Source::Synthetic)
                .ok_or_else(|| config_error(format!("unknown source {source:?}")))?;
            let generated = generate_queries_detailed(
                source,
                cli.backend()?.as_ref(),
                GenerateConfig {
                    query_count: *count,
                    max_rounds: *rounds,
                },
            )
            .map_err(|e| PipelineError::new(PipelineStage::Queries, ErrorKind::Collection, e.to_string()))?;
            let json: Vec<Value> = generated.queries.iter().map(SourceQuery::to_json).collect();
            write_text(out, &(serde_json::to_string_pretty(&json).expect("serializes") + "\n"))?;
            println!(
                "{} queries in {} round(s), {} rejected -> {}",
                generated.queries.len(),
                generated.rounds,
                generated.rejected,
                out.display()
            );
        }
        Command::Collect { config } => {
            let p = Pipeline::new(cli.load_config(config)?)?.force(cli.force);
            p.explore();
            p.collect_stage()?;
            let m = p.load_manifest()?;
            println!("{}: {} series collected", m.name, m.count_original);
        }
        Command::Prune { dataset } => {
            let kept = cli.open(dataset)?.prune_stage()?;
            println!("{dataset}: {kept} series kept");
        }
        Command::Augment { dataset } => {
            let n = cli.open(dataset)?.augment_stage()?;
            println!("{dataset}: {n} augmented series");
        }
        Command::Split { dataset, ratio } => {
            let p = cli.open(dataset)?;
            let ratio = ratio.unwrap_or(p.config().split_ratio);
            let (train, test) = p.split_stage(ratio, p.config().master_seed)?;
            println!("{dataset}: {train} training samples, {test} test samples");
        }
        Command::Report { dataset, csv } => {
            let p = Pipeline::open(&cli.output_dir(), dataset)?;
            let format = if *csv { ReportFormat::Csv } else { ReportFormat::Text };
            print!("{}", report(&p.load_manifest()?, format));
        }
        Command::Run { config } => {
            let m = Pipeline::new(cli.load_config(config)?)?.force(cli.force).run()?;
            print!("{}", report(&m, ReportFormat::Text));
        }
        Command::SynthFixtures { set, out } => {
            let specs: Vec<_> = if set == "all" {
                REFERENCE_SETS.iter().collect()
            } else {
                vec![reference_set(set).ok_or_else(|| config_error(format!("unknown set {set:?}")))?]
            };
            for spec in specs {
                let written = write_fixture_set(spec, out, cli.seed.unwrap_or(0), &DetectorConfig::default())
                    .map_err(|e| io_error(e.to_string()))?;
                println!(
                    "{}: {} queries, config {}",
                    spec.name,
                    written.queries,
                    written.config_path.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
