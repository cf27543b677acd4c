//! The full denoising pass: embeddings, blocking, candidate pairs, similarity,
//! grouping, merging, and triple reflection, with per-stage counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocking::{build_blocks, Block, BlockingStrategy, DEFAULT_MAX_BLOCK_SIZE};
use crate::embed::{
    embed_descriptions, load_external_embeddings, train_kg_embeddings, EmbedInput, EmbeddingTable,
    KgeModel, TextEmbedder, TrainConfig,
};
use crate::error::{EmbeddingError, FormatError, PipelineError};
use crate::graph::{EntityId, KnowledgeGraph, Triple};
use crate::io::{ReductionReport, StageCounts};
use crate::llm::ServiceConfig;
use crate::matching::{
    candidate_pairs, group_by_target_ratio, group_by_threshold, CanonicalChoice, CanonicalPolicy,
    MatchGroup, ScoredPair, SimilarityContext, SimilarityMode, TypeAveraging,
};
use crate::merging::{
    apply_plan, MergePlan, MergeStats, MergeStrategy, Summarizer, DEFAULT_TOKEN_BUDGET,
};
use crate::reflection::{reflect_graph, Judge, JudgeConfig, ReflectionVerdict};

pub const ER_STAGE: &str = "entity_resolution";
pub const REFLECTION_STAGE: &str = "triple_reflection";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Transe,
    Distmult,
    Complex,
    ExternalFile,
    #[default]
    Service,
}

/// Exactly one grouping criterion: `{"threshold": 0.9}` or `{"target_ratio": 0.4}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Threshold(f64),
    TargetRatio(f64),
}

impl Default for Grouping {
    fn default() -> Self {
        Grouping::TargetRatio(0.4)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    ErThenReflection,
    ReflectionThenEr,
}

/// Which implementations back the embedder, summarizer, and judge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Mock,
    Live,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectionSettings {
    pub enabled: bool,
    #[serde(flatten)]
    pub judge: JudgeConfig,
}

impl Default for ReflectionSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            judge: JudgeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelinePaths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub reflection_log: Option<PathBuf>,
    /// JSONL vectors for `external_file` embeddings.
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub backend: Backend,
    pub blocking: BlockingStrategy,
    pub max_block_size: usize,
    pub embedding_source: EmbeddingSource,
    pub embed_input: EmbedInput,
    /// Dimension of the offline embedder used with the mock backend.
    pub mock_dimension: usize,
    pub training: TrainConfig,
    pub similarity_mode: SimilarityMode,
    pub type_averaging: TypeAveraging,
    pub grouping: Grouping,
    pub canonical_policy: CanonicalPolicy,
    /// Root seed; training, blocking, and canonical selection derive from it.
    pub seed: u64,
    pub merge_strategy: MergeStrategy,
    pub synonym_label: String,
    pub token_budget: usize,
    pub reflection: ReflectionSettings,
    pub stage_order: StageOrder,
    pub service: ServiceConfig,
    pub paths: PipelinePaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backend: Backend::default(),
            blocking: BlockingStrategy::default(),
            max_block_size: DEFAULT_MAX_BLOCK_SIZE,
            embedding_source: EmbeddingSource::default(),
            embed_input: EmbedInput::default(),
            mock_dimension: 64,
            training: TrainConfig::default(),
            similarity_mode: SimilarityMode::default(),
            type_averaging: TypeAveraging::default(),
            grouping: Grouping::default(),
            canonical_policy: CanonicalPolicy::default(),
            seed: 0,
            merge_strategy: MergeStrategy::default(),
            synonym_label: crate::merging::DEFAULT_SYNONYM_LABEL.to_owned(),
            token_budget: DEFAULT_TOKEN_BUDGET,
            reflection: ReflectionSettings::default(),
            stage_order: StageOrder::default(),
            service: ServiceConfig::default(),
            paths: PipelinePaths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::File {
            path: path.to_owned(),
            source: FormatError::Io(e),
        })?;
        Self::from_json(&text)
    }

    /// Checks value ranges and that referenced input files exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match self.grouping {
            Grouping::Threshold(d) if !d.is_finite() => {
                return bad(format!("threshold {d} is not finite"))
            }
            Grouping::TargetRatio(r) if !(0.0..1.0).contains(&r) => {
                return bad(format!("target_ratio {r} outside [0, 1)"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.reflection.judge.threshold) {
            return bad(format!(
                "reflection threshold {} outside [0, 1]",
                self.reflection.judge.threshold
            ));
        }
        if self.max_block_size < 2 {
            return bad(format!(
                "max_block_size must be at least 2, got {}",
                self.max_block_size
            ));
        }
        if self.token_budget == 0 {
            return bad("token_budget must be positive".into());
        }
        if self.mock_dimension == 0 {
            return bad("mock_dimension must be positive".into());
        }
        if matches!(
            self.embedding_source,
            EmbeddingSource::Transe | EmbeddingSource::Distmult | EmbeddingSource::Complex
        ) {
            self.training
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.embedding_source == EmbeddingSource::ExternalFile && self.paths.embeddings.is_none()
        {
            return bad("external_file embeddings need paths.embeddings".into());
        }
        for path in [&self.paths.input, &self.paths.embeddings]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(PipelineError::File {
                    path: path.clone(),
                    source: FormatError::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "no such file",
                    )),
                });
            }
        }
        Ok(())
    }

    pub fn canonical_choice(&self) -> CanonicalChoice {
        CanonicalChoice {
            policy: self.canonical_policy,
            seed: self.seed,
        }
    }
}

/// The external services a run talks to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub embedder: &'a dyn TextEmbedder,
    pub summarizer: &'a dyn Summarizer,
    pub judge: &'a dyn Judge,
}

/// Intermediate products of entity resolution.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErTrace {
    pub blocks: usize,
    pub candidate_pairs: usize,
    pub groups: Vec<MatchGroup>,
    pub merges: usize,
    pub merge_stats: MergeStats,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub graph: KnowledgeGraph,
    pub report: ReductionReport,
    pub verdicts: Vec<ReflectionVerdict>,
    pub removed: Vec<Triple>,
    pub er: ErTrace,
    pub warnings: Vec<String>,
}

/// Embeds every entity of `graph` from the configured source.
pub fn entity_embeddings(
    graph: &KnowledgeGraph,
    config: &PipelineConfig,
    embedder: &dyn TextEmbedder,
) -> Result<EmbeddingTable, EmbeddingError> {
    let train = |model| {
        let training = TrainConfig {
            seed: config.seed,
            ..config.training.clone()
        };
        train_kg_embeddings(graph, model, &training)
    };
    match config.embedding_source {
        EmbeddingSource::Transe => train(KgeModel::TransE),
        EmbeddingSource::Distmult => train(KgeModel::DistMult),
        EmbeddingSource::Complex => train(KgeModel::ComplEx),
        EmbeddingSource::Service => {
            embed_descriptions(graph.entities(), embedder, config.embed_input)
        }
        EmbeddingSource::ExternalFile => {
            let path = config.paths.embeddings.as_ref().ok_or_else(|| {
                EmbeddingError::InvalidConfig("paths.embeddings is not set".into())
            })?;
            let ids: BTreeSet<EntityId> = graph.entity_ids().cloned().collect();
            load_external_embeddings(File::open(path)?, &ids)
        }
    }
}

/// Blocking, scoring, and grouping.
pub fn resolve_entities(
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    config: &PipelineConfig,
) -> Result<(Vec<MatchGroup>, ErTrace), PipelineError> {
    let blocks = build_blocks(
        config.blocking,
        graph,
        table,
        config.max_block_size,
        config.seed,
    )?;
    group_blocks(graph, table, &blocks, config)
}

/// Scores the within-block pairs of `blocks` and groups them per `config.grouping`.
pub fn group_blocks(
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    blocks: &[Block],
    config: &PipelineConfig,
) -> Result<(Vec<MatchGroup>, ErTrace), PipelineError> {
    let pairs: Vec<(EntityId, EntityId)> = candidate_pairs(blocks).into_iter().collect();
    let scored: Vec<ScoredPair> = SimilarityContext::new(graph, table, config.similarity_mode)
        .with_averaging(config.type_averaging)
        .score_pairs(&pairs)?;
    let canon = config.canonical_choice();
    let (groups, merges) = match config.grouping {
        Grouping::Threshold(delta) => {
            let groups = group_by_threshold(&scored, delta, canon);
            let merges = groups.iter().map(|g| g.members.len() - 1).sum();
            (groups, merges)
        }
        Grouping::TargetRatio(ratio) => {
            let r = group_by_target_ratio(&scored, graph.entity_count(), ratio, canon)?;
            (r.groups, r.merges)
        }
    };
    let trace = ErTrace {
        blocks: blocks.len(),
        candidate_pairs: pairs.len(),
        groups: groups.clone(),
        merges,
        ..Default::default()
    };
    Ok((groups, trace))
}

fn er_stage(
    graph: &KnowledgeGraph,
    config: &PipelineConfig,
    backends: &Backends<'_>,
) -> Result<(KnowledgeGraph, ErTrace), PipelineError> {
    if graph.entity_count() < 2 || matches!(config.grouping, Grouping::TargetRatio(r) if r == 0.0) {
        return Ok((graph.clone(), ErTrace::default()));
    }
    let table = entity_embeddings(graph, config, backends.embedder)?;
    let (groups, mut trace) = resolve_entities(graph, &table, config)?;
    let plan = MergePlan {
        groups,
        strategy: config.merge_strategy,
        synonym_label: config.synonym_label.clone(),
        token_budget: config.token_budget,
    };
    let outcome = apply_plan(graph, &plan, backends.summarizer)?;
    trace.merge_stats = outcome.stats;
    Ok((outcome.graph, trace))
}

/// Runs both stages in the configured order and assembles the reduction report.
pub fn run_pipeline(
    graph: &KnowledgeGraph,
    config: &PipelineConfig,
    backends: &Backends<'_>,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let mut judge_config = config.reflection.judge.clone();
    judge_config.exempt_label = config.synonym_label.clone();
    let in_flight = config.service.max_in_flight;

    let mut stages = BTreeMap::new();
    let mut current = graph.clone();
    let mut er = ErTrace::default();
    let mut verdicts = Vec::new();
    let mut removed = Vec::new();
    let mut warnings = Vec::new();

    let order = match config.stage_order {
        StageOrder::ErThenReflection => [ER_STAGE, REFLECTION_STAGE],
        StageOrder::ReflectionThenEr => [REFLECTION_STAGE, ER_STAGE],
    };
    for stage in order {
        let before = current.clone();
        if stage == ER_STAGE {
            let (next, trace) = er_stage(&current, config, backends)?;
            log::info!(
                "{stage}: {} blocks, {} candidate pairs, {} groups, {} merges",
                trace.blocks,
                trace.candidate_pairs,
                trace.groups.len(),
                trace.merges
            );
            current = next;
            er = trace;
        } else if config.reflection.enabled {
            let outcome = reflect_graph(&current, backends.judge, &judge_config, in_flight, None)?;
            log::info!(
                "{stage}: judged {}, removed {}",
                outcome.verdicts.len(),
                outcome.removed.len()
            );
            current = outcome.graph;
            verdicts = outcome.verdicts;
            removed = outcome.removed;
            warnings.extend(outcome.warnings);
        } else {
            continue;
        }
        stages.insert(stage.to_owned(), StageCounts::between(&before, &current));
    }

    let report = ReductionReport::allowing_growth(
        (graph.entity_count(), current.entity_count()),
        (graph.triple_count(), current.triple_count()),
        stages,
    );
    Ok(PipelineOutput {
        graph: current,
        report,
        verdicts,
        removed,
        er,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::MockEmbedder;
    use crate::merging::Truncate;
    use crate::reflection::MockJudge;
    use crate::synth::{generate_noisy_kg, NoiseSpec};

    fn mocks(embedder: &MockEmbedder) -> Backends<'_> {
        Backends {
            embedder,
            summarizer: &Truncate,
            judge: &MockJudge,
        }
    }

    #[test]
    fn config_defaults_and_grouping_schema() {
        let c = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(c.grouping, Grouping::TargetRatio(0.4));
        assert_eq!(c.blocking, BlockingStrategy::Semantic);
        assert_eq!(c.embedding_source, EmbeddingSource::Service);
        assert_eq!(c.similarity_mode, SimilarityMode::Ego);
        assert_eq!(c.merge_strategy, MergeStrategy::DirectMerge);
        assert_eq!(c.reflection.judge.threshold, 0.2);
        let c = PipelineConfig::from_json(
            r#"{"grouping": {"threshold": 0.99}, "reflection": {"enabled": false}}"#,
        )
        .unwrap();
        assert_eq!(c.grouping, Grouping::Threshold(0.99));
        assert!(!c.reflection.enabled);
        assert!(PipelineConfig::from_json(
            r#"{"grouping": {"threshold": 0.9, "target_ratio": 0.4}}"#
        )
        .is_err());
        let bad = PipelineConfig {
            grouping: Grouping::TargetRatio(1.0),
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn default_run_hits_target_ratio() {
        let (g, _) = generate_noisy_kg(&NoiseSpec::default()).unwrap();
        let embedder = MockEmbedder::new(32);
        let out = run_pipeline(&g, &PipelineConfig::default(), &mocks(&embedder)).unwrap();
        assert_eq!(out.graph.entity_count(), 60);
        let er = &out.report.per_stage[ER_STAGE];
        assert_eq!(er.entities_after + out.er.merges, er.entities_before);
        let tr = &out.report.per_stage[REFLECTION_STAGE];
        assert_eq!(tr.triples_after + out.removed.len(), er.triples_after);
        assert!(out.graph.validate().is_empty());
    }

    #[test]
    fn identity_run() {
        let (g, _) = generate_noisy_kg(&NoiseSpec::default()).unwrap();
        let embedder = MockEmbedder::new(8);
        let config = PipelineConfig {
            grouping: Grouping::TargetRatio(0.0),
            reflection: ReflectionSettings {
                enabled: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_pipeline(&g, &config, &mocks(&embedder)).unwrap();
        assert_eq!(out.graph, g);
        assert!(!out.report.per_stage.contains_key(REFLECTION_STAGE));
    }

    #[test]
    fn reflection_first_order() {
        let (g, truth) = generate_noisy_kg(&NoiseSpec {
            duplicate_clusters: 0,
            ..Default::default()
        })
        .unwrap();
        let embedder = MockEmbedder::new(8);
        let config = PipelineConfig {
            stage_order: StageOrder::ReflectionThenEr,
            grouping: Grouping::Threshold(2.0),
            ..Default::default()
        };
        let out = run_pipeline(&g, &config, &mocks(&embedder)).unwrap();
        assert_eq!(out.removed.len(), truth.bad_triples.len());
        assert_eq!(out.graph.entity_count(), g.entity_count());
    }

    #[test]
    fn trained_embeddings_drive_matching() {
        let (g, _) = generate_noisy_kg(&NoiseSpec {
            base_entities: 40,
            duplicate_clusters: 5,
            ..Default::default()
        })
        .unwrap();
        let embedder = MockEmbedder::new(8);
        for source in [
            EmbeddingSource::Transe,
            EmbeddingSource::Distmult,
            EmbeddingSource::Complex,
        ] {
            let config = PipelineConfig {
                embedding_source: source,
                training: TrainConfig {
                    dimension: 8,
                    epochs: 5,
                    ..Default::default()
                },
                ..Default::default()
            };
            let out = run_pipeline(&g, &config, &mocks(&embedder)).unwrap();
            assert_eq!(out.graph.entity_count(), 24);
        }
    }
}
