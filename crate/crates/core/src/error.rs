use std::io;

use thiserror::Error;

use crate::graph::{EntityId, TripleKey, Violation};

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot train embeddings on an empty graph")]
    EmptyGraph,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("no embedding for entity `{0}`")]
    MissingId(EntityId),
    #[error("line {line}: expected dimension {expected}, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("embedding service: {0}")]
    Service(#[from] LlmError),
}

#[derive(Debug, Error)]
pub enum BlockingError {
    #[error("k-means needs at least one point")]
    EmptyInput,
    #[error("k-means got vectors of different lengths")]
    RaggedInput,
    #[error("no embedding for entity `{0}`")]
    Coverage(EntityId),
    #[error("max_block_size must be at least 2, got {0}")]
    BlockSize(usize),
}

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("no embedding for entity `{0}`")]
    Coverage(EntityId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot pick a canonical member of an empty group")]
    EmptyGroup,
    #[error("target ratio must lie in [0, 1), got {0}")]
    Ratio(f64),
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("entity `{0}` appears in more than one group")]
    OverlappingGroups(EntityId),
    #[error("canonical `{0}` is not a member of its group")]
    CanonicalNotMember(EntityId),
    #[error("plan strategy {found:?} does not match operation {expected:?}")]
    WrongStrategy {
        expected: crate::merging::MergeStrategy,
        found: crate::merging::MergeStrategy,
    },
    #[error("canonical `{0}` is not in the graph")]
    UnknownCanonical(EntityId),
    #[error("group member `{0}` is not in the graph")]
    UnknownMember(EntityId),
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request failed after {attempts} attempt(s): {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: TransportError,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("request has no input")]
    EmptyInput,
}

/// Failure of a single HTTP exchange.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("rate limited")]
    RateLimited,
    #[error("timed out")]
    Timeout,
    #[error("server error {0}")]
    Server(u16),
    #[error("client error {status}: {body}")]
    Client { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingKey(String),
}

impl TransportError {
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            TransportError::RateLimited
                | TransportError::Timeout
                | TransportError::Server(_)
                | TransportError::Network(_)
        )
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge reply unusable after {attempts} attempt(s): {raw}")]
    Malformed { attempts: u32, raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Error)]
pub enum ReflectionError {
    #[error("no verdict for triple {0}")]
    MissingVerdict(TripleKey),
    #[error("{} triple(s) failed judging; first: {}: {}", .failures.len(), .failures[0].0, .failures[0].1)]
    Judge {
        failures: Vec<(TripleKey, JudgeError)>,
    },
    #[error("entity `{0}` referenced by a triple is missing")]
    MissingEntity(EntityId),
    #[error(transparent)]
    Log(#[from] FormatError),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible noise spec: {0}")]
    Infeasible(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("entity `{0}` appears in more than one predicted group")]
    OverlappingGroups(EntityId),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("embedding stage failed: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("blocking stage failed: {0}")]
    Blocking(#[from] BlockingError),
    #[error("matching stage failed: {0}")]
    Matching(#[from] MatchingError),
    #[error("merging stage failed: {0}")]
    Merge(#[from] MergeError),
    #[error("reflection stage failed: {0}")]
    Reflection(#[from] ReflectionError),
    #[error("{path}: {source}")]
    File {
        path: std::path::PathBuf,
        #[source]
        source: FormatError,
    },
}
