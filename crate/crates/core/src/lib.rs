//! Knowledge-graph denoising: entity resolution over blocked candidates,
//! graph merging, and LLM-judged triple filtering.

pub mod blocking;
pub mod cli;
pub mod embed;
pub mod error;
pub mod graph;
pub mod io;
pub mod kmeans;
pub mod llm;
pub mod matching;
pub mod merging;
pub mod pipeline;
pub mod reflection;
pub mod synth;
pub mod unionfind;
pub mod util;

pub use error::*;
pub use graph::{Entity, EntityId, KnowledgeGraph, Triple, TripleKey};
