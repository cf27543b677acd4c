//! Command-line surface. Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::blocking::{build_blocks, Block};
use crate::embed::MockEmbedder;
use crate::error::{FormatError, PipelineError};
use crate::graph::{whitespace_tokens, KnowledgeGraph, TripleKey};
use crate::io::{
    load_graph, read_jsonl, read_reflection_log, save_graph, write_json, write_jsonl,
    write_reflection_log, GraphFormat,
};
use crate::llm::LlmClient;
use crate::matching::MatchGroup;
use crate::merging::{apply_plan, LlmSummarizer, MergePlan, MergeStrategy, Truncate};
use crate::pipeline::{
    entity_embeddings, group_blocks, resolve_entities, run_pipeline, Backend, Backends, Grouping,
    PipelineConfig,
};
use crate::reflection::{reflect_graph, LlmJudge, MockJudge};
use crate::synth::{
    generate_noisy_kg, reflection_metrics, resolution_metrics, GroundTruth, NoiseSpec,
};

#[derive(Debug, Parser)]
#[command(
    name = "kg-denoise",
    version,
    about = "Entity resolution and triple reflection for knowledge graphs"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override values from `--config`.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON pipeline config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Group by similarity threshold instead of target ratio.
    #[arg(long, global = true, conflicts_with = "ratio")]
    pub delta_er: Option<f64>,
    /// Fraction of entities to merge away.
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    /// Reflection score threshold.
    #[arg(long, global = true)]
    pub delta_tr: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run entity resolution and triple reflection end to end.
    Denoise {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reduction report destination; printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        reflection_log: Option<PathBuf>,
    },
    /// Write candidate blocks as JSONL.
    Block {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate pairs from a block file and write match groups as JSON.
    Match {
        input: PathBuf,
        #[arg(long)]
        blocks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply match groups to a graph.
    Merge {
        input: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<MergeStrategy>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Judge and filter triples.
    Reflect {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print graph statistics as JSON.
    Stats { input: PathBuf },
    /// Generate a synthetic noisy graph and its ground truth.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Score match groups and/or a reflection log against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        /// Graph the groups were computed on; its entities form the pair universe.
        #[arg(long, requires = "groups")]
        graph: Option<PathBuf>,
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        reflection_log: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<MergeStrategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| "expected direct_merge, synonym_link or merge_with_link".to_owned())
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::File { .. } => {
                Failure::Invalid(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn file_error(path: &Path, e: FormatError) -> Failure {
    match e {
        FormatError::Io(_) => Failure::Runtime(format!("{}: {e}", path.display())),
        _ => Failure::Invalid(format!("{}: {e}", path.display())),
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn format_for(path: &Path) -> GraphFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => GraphFormat::TsvTriples,
        _ => GraphFormat::Json,
    }
}

fn read_graph(path: &Path) -> Result<KnowledgeGraph, Failure> {
    load_graph(open(path)?, format_for(path)).map_err(|e| file_error(path, e))
}

fn write_graph(graph: &KnowledgeGraph, path: &Path) -> Result<(), Failure> {
    save_graph(graph, create(path)?).map_err(|e| file_error(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_reader(std::io::BufReader::new(open(path)?))
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write_to<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let result = match path {
        Some(p) => write_json(value, create(p)?),
        None => write_json(value, std::io::stdout().lock()),
    };
    result.map_err(|e| Failure::Runtime(e.to_string()))
}

fn load_config(o: &Overrides) -> Result<PipelineConfig, Failure> {
    let mut config = match &o.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = o.delta_er {
        config.grouping = Grouping::Threshold(d);
    }
    if let Some(r) = o.ratio {
        config.grouping = Grouping::TargetRatio(r);
    }
    if let Some(d) = o.delta_tr {
        config.reflection.judge.threshold = d;
    }
    if let Some(s) = o.seed {
        config.seed = s;
    }
    Ok(config)
}

/// Owns whichever backend implementations the config asks for.
struct Services {
    embedder: MockEmbedder,
    client: Option<LlmClient>,
    max_retries: u32,
}

impl Services {
    fn new(config: &PipelineConfig) -> Result<Self, Failure> {
        let client = match config.backend {
            Backend::Mock => None,
            Backend::Live => Some(
                LlmClient::new(config.service.clone())
                    .map_err(|e| Failure::Invalid(e.to_string()))?,
            ),
        };
        let embedder = MockEmbedder {
            dimension: config.mock_dimension,
            seed: config.seed,
        };
        Ok(Self {
            embedder,
            client,
            max_retries: config.reflection.judge.max_retries,
        })
    }

    fn with<R>(&self, f: impl FnOnce(Backends<'_>) -> R) -> R {
        match &self.client {
            Some(c) => {
                let (summarizer, judge) =
                    (LlmSummarizer::new(c), LlmJudge::new(c, self.max_retries));
                f(Backends {
                    embedder: c,
                    summarizer: &summarizer,
                    judge: &judge,
                })
            }
            None => f(Backends {
                embedder: &self.embedder,
                summarizer: &Truncate,
                judge: &MockJudge,
            }),
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut config = load_config(&cli.overrides)?;
    match cli.command {
        Command::Denoise {
            input,
            out,
            report,
            reflection_log,
        } => {
            if input.is_some() {
                config.paths.input = input;
            }
            if out.is_some() {
                config.paths.output = out;
            }
            if report.is_some() {
                config.paths.report = report;
            }
            if reflection_log.is_some() {
                config.paths.reflection_log = reflection_log;
            }
            config.validate()?;
            let input = config
                .paths
                .input
                .clone()
                .ok_or_else(|| Failure::Invalid("no input graph given".into()))?;
            let graph = read_graph(&input)?;
            let services = Services::new(&config)?;
            let output = services.with(|b| run_pipeline(&graph, &config, &b))?;
            if let Some(path) = &config.paths.reflection_log {
                write_reflection_log(&output.verdicts, create(path)?)
                    .map_err(|e| file_error(path, e))?;
            }
            match &config.paths.output {
                Some(path) => write_graph(&output.graph, path)?,
                None => log::warn!("no output path configured; denoised graph not written"),
            }
            for w in &output.warnings {
                log::warn!("{w}");
            }
            write_to(&output.report, config.paths.report.as_deref())
        }
        Command::Block { input, out } => {
            config.validate()?;
            let graph = read_graph(&input)?;
            let services = Services::new(&config)?;
            let blocks = services.with(|b| -> Result<Vec<Block>, PipelineError> {
                let table = entity_embeddings(&graph, &config, b.embedder)?;
                Ok(build_blocks(
                    config.blocking,
                    &graph,
                    &table,
                    config.max_block_size,
                    config.seed,
                )?)
            })?;
            write_jsonl(&blocks, create(&out)?).map_err(|e| file_error(&out, e))
        }
        Command::Match { input, blocks, out } => {
            config.validate()?;
            let graph = read_graph(&input)?;
            let blocks: Option<Vec<Block>> = match &blocks {
                Some(p) => Some(read_jsonl(open(p)?).map_err(|e| file_error(p, e))?),
                None => None,
            };
            let services = Services::new(&config)?;
            let groups = services.with(|b| -> Result<Vec<MatchGroup>, PipelineError> {
                let table = entity_embeddings(&graph, &config, b.embedder)?;
                Ok(match blocks {
                    Some(blocks) => group_blocks(&graph, &table, &blocks, &config)?.0,
                    None => resolve_entities(&graph, &table, &config)?.0,
                })
            })?;
            write_to(&groups, Some(&out))
        }
        Command::Merge {
            input,
            groups,
            strategy,
            out,
        } => {
            let graph = read_graph(&input)?;
            let groups: Vec<MatchGroup> = read_json(&groups)?;
            let plan = MergePlan {
                groups,
                strategy: strategy.unwrap_or(config.merge_strategy),
                synonym_label: config.synonym_label.clone(),
                token_budget: config.token_budget,
            };
            let services = Services::new(&config)?;
            let outcome = services
                .with(|b| apply_plan(&graph, &plan, b.summarizer))
                .map_err(|e| Failure::Invalid(e.to_string()))?;
            write_graph(&outcome.graph, &out)?;
            write_to(&outcome.stats, None)
        }
        Command::Reflect { input, out, log } => {
            config.validate()?;
            let graph = read_graph(&input)?;
            let mut judge_config = config.reflection.judge.clone();
            judge_config.exempt_label = config.synonym_label.clone();
            let services = Services::new(&config)?;
            let outcome = services
                .with(|b| {
                    reflect_graph(
                        &graph,
                        b.judge,
                        &judge_config,
                        config.service.max_in_flight,
                        None,
                    )
                })
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            if let Some(path) = &log {
                write_reflection_log(&outcome.verdicts, create(path)?)
                    .map_err(|e| file_error(path, e))?;
            }
            write_graph(&outcome.graph, &out)?;
            eprintln!(
                "judged {}, removed {}",
                outcome.verdicts.len(),
                outcome.removed.len()
            );
            Ok(())
        }
        Command::Stats { input } => {
            let graph = read_graph(&input)?;
            write_to(&graph.stats(whitespace_tokens), None)
        }
        Command::Synth { spec, out, truth } => {
            let mut spec: NoiseSpec = match &spec {
                Some(p) => read_json(p)?,
                None => NoiseSpec::default(),
            };
            if let Some(s) = cli.overrides.seed {
                spec.seed = s;
            }
            let (graph, gt) =
                generate_noisy_kg(&spec).map_err(|e| Failure::Invalid(e.to_string()))?;
            write_graph(&graph, &out)?;
            if let Some(path) = &truth {
                write_to(&gt, Some(path))?;
            }
            Ok(())
        }
        Command::Eval {
            truth,
            graph,
            groups,
            reflection_log,
        } => {
            let truth: GroundTruth = read_json(&truth)?;
            let mut record = serde_json::Map::new();
            if let Some(groups_path) = &groups {
                let groups: Vec<MatchGroup> = read_json(groups_path)?;
                let universe = match &graph {
                    Some(p) => read_graph(p)?.entity_ids().cloned().collect(),
                    None => truth
                        .clusters
                        .iter()
                        .chain(groups.iter().map(|g| &g.members))
                        .flatten()
                        .cloned()
                        .collect(),
                };
                let m = resolution_metrics(&groups, &truth, &universe)
                    .map_err(|e| Failure::Invalid(e.to_string()))?;
                record.insert(
                    "resolution".into(),
                    serde_json::to_value(m).expect("plain struct"),
                );
            }
            if let Some(path) = &reflection_log {
                let verdicts = read_reflection_log(open(path)?).map_err(|e| file_error(path, e))?;
                let threshold = config.reflection.judge.threshold;
                let all: BTreeSet<TripleKey> = verdicts.iter().map(|v| v.key()).collect();
                let removed: BTreeSet<TripleKey> = verdicts
                    .iter()
                    .filter(|v| v.score < threshold)
                    .map(|v| v.key())
                    .collect();
                let m = reflection_metrics(&removed, &truth, &all);
                record.insert(
                    "reflection".into(),
                    serde_json::to_value(m).expect("plain struct"),
                );
            }
            if record.is_empty() {
                return Err(Failure::Invalid(
                    "nothing to evaluate: pass --groups and/or --reflection-log".into(),
                ));
            }
            write_to(&record, None)
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
