//! Per-entity vectors from trained KG-embedding models, external files, or an
//! embedding service.

mod score;
mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use score::{
    complex_grad, distmult_grad, logistic_loss, logistic_loss_slope, margin_ranking_loss,
    score_complex, score_distmult, score_transe, transe_grad, Norm, ScoreGrad,
};
pub use train::{train_kg_embeddings, train_with_log, KgeModel, TrainConfig, TrainLog};

use crate::error::{EmbeddingError, LlmError};
use crate::graph::{Entity, EntityId};
use crate::util::keyed_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    TransE,
    DistMult,
    ComplEx,
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    model: ModelTag,
    dimension: usize,
    entities: BTreeMap<EntityId, Vec<f64>>,
    relations: Option<BTreeMap<String, Vec<f64>>>,
}

impl EmbeddingTable {
    /// Checks every vector against the declared dimension (twice that for ComplEx).
    pub fn new(
        model: ModelTag,
        dimension: usize,
        entities: BTreeMap<EntityId, Vec<f64>>,
        relations: Option<BTreeMap<String, Vec<f64>>>,
    ) -> Result<Self, EmbeddingError> {
        let table = Self {
            model,
            dimension,
            entities,
            relations,
        };
        let width = table.vector_len();
        let all = table
            .entities
            .values()
            .chain(table.relations.iter().flat_map(|r| r.values()));
        for v in all {
            if v.len() != width {
                return Err(EmbeddingError::LengthMismatch(width, v.len()));
            }
        }
        Ok(table)
    }

    pub fn model(&self) -> ModelTag {
        self.model
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Stored length of each vector.
    pub fn vector_len(&self) -> usize {
        match self.model {
            ModelTag::ComplEx => 2 * self.dimension,
            _ => self.dimension,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entities.get(id).map(Vec::as_slice)
    }

    pub fn entity_vectors(&self) -> &BTreeMap<EntityId, Vec<f64>> {
        &self.entities
    }

    pub fn relation_vectors(&self) -> Option<&BTreeMap<String, Vec<f64>>> {
        self.relations.as_ref()
    }

    /// Fails on the first id (in iteration order) without a vector.
    pub fn check_coverage<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a EntityId>,
    ) -> Result<(), EmbeddingError> {
        match ids.into_iter().find(|id| !self.entities.contains_key(*id)) {
            Some(id) => Err(EmbeddingError::MissingId(id.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Deserialize)]
struct VectorRecord {
    id: String,
    vector: Vec<f64>,
}

/// Reads `{"id": ..., "vector": [...]}` lines and checks that every expected id is present.
pub fn load_external_embeddings(
    reader: impl Read,
    expected_ids: &BTreeSet<EntityId>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let mut entities = BTreeMap::new();
    let mut dimension = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VectorRecord =
            serde_json::from_str(&line).map_err(|e| EmbeddingError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        let expected = *dimension.get_or_insert(record.vector.len());
        if record.vector.len() != expected || expected == 0 {
            return Err(EmbeddingError::Dimension {
                line: i + 1,
                expected,
                found: record.vector.len(),
            });
        }
        if entities
            .insert(EntityId::new(record.id.clone()), record.vector)
            .is_some()
        {
            return Err(EmbeddingError::Parse {
                line: i + 1,
                message: format!("duplicate id `{}`", record.id),
            });
        }
    }
    let table = EmbeddingTable::new(ModelTag::External, dimension.unwrap_or(0), entities, None)?;
    table.check_coverage(expected_ids)?;
    Ok(table)
}

/// Anything that turns a batch of texts into equally sized vectors, in order.
pub trait TextEmbedder: Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

/// What text each entity contributes to the embedder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedInput {
    /// `"name: description"`, or the bare name when the description is empty.
    #[default]
    NameAndDescription,
    /// The description alone, or the bare name when it is empty.
    DescriptionOnly,
}

impl EmbedInput {
    pub fn text_for(self, entity: &Entity) -> String {
        if entity.description.is_empty() {
            return entity.name.clone();
        }
        match self {
            EmbedInput::NameAndDescription => format!("{}: {}", entity.name, entity.description),
            EmbedInput::DescriptionOnly => entity.description.clone(),
        }
    }
}

pub fn embed_descriptions(
    entities: &[Entity],
    embedder: &dyn TextEmbedder,
    input: EmbedInput,
) -> Result<EmbeddingTable, EmbeddingError> {
    if entities.is_empty() {
        return EmbeddingTable::new(ModelTag::External, 0, BTreeMap::new(), None);
    }
    let texts: Vec<String> = entities.iter().map(|e| input.text_for(e)).collect();
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(LlmError::Protocol(format!(
            "asked for {} vectors, got {}",
            texts.len(),
            vectors.len()
        ))
        .into());
    }
    let dimension = vectors[0].len();
    let table = entities.iter().map(|e| e.id.clone()).zip(vectors).collect();
    EmbeddingTable::new(ModelTag::External, dimension, table, None)
}

/// Deterministic offline embedder: equal texts (after lowercasing and collapsing
/// whitespace) map to equal pseudo-random vectors.
#[derive(Clone, Debug)]
pub struct MockEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl MockEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, seed: 0 }
    }

    pub fn normalize(text: &str) -> String {
        text.split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut rng = keyed_rng(self.seed, &[Self::normalize(text)]);
        (0..self.dimension)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }
}

impl TextEmbedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn ids(list: &[&str]) -> BTreeSet<EntityId> {
        list.iter().map(|s| EntityId::from(*s)).collect()
    }

    #[test]
    fn external_file_loads() {
        let text = (0..3)
            .map(|i| format!("{{\"id\":\"e{i}\",\"vector\":[1,2,3,{i}]}}\n"))
            .collect::<String>();
        let table = load_external_embeddings(text.as_bytes(), &ids(&["e0", "e1", "e2"])).unwrap();
        assert_eq!(table.dimension(), 4);
        assert_eq!(table.model(), ModelTag::External);
        assert!(table.relation_vectors().is_none());
        assert_eq!(table.get("e2").unwrap(), &[1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn external_file_missing_id() {
        let text = "{\"id\":\"e0\",\"vector\":[1,2]}\n{\"id\":\"e1\",\"vector\":[1,2]}\n";
        match load_external_embeddings(text.as_bytes(), &ids(&["e0", "e1", "e2"])) {
            Err(EmbeddingError::MissingId(id)) => assert_eq!(id.as_str(), "e2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn external_file_mixed_dimensions() {
        let text = "{\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"vector\":[1,2,3,4,5]}\n";
        match load_external_embeddings(text.as_bytes(), &ids(&["a", "b"])) {
            Err(EmbeddingError::Dimension {
                line,
                expected,
                found,
            }) => assert_eq!((line, expected, found), (2, 4, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn external_file_parse_error() {
        let err =
            load_external_embeddings("{\"id\":\"a\"\n".as_bytes(), &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 1, .. }));
    }

    struct Recording {
        seen: Mutex<Vec<String>>,
    }

    impl TextEmbedder for Recording {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
            self.seen.lock().unwrap().extend(texts.iter().cloned());
            Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect())
        }
    }

    #[test]
    fn description_texts() {
        let entities = vec![
            Entity::with_id("1", "GPU").described("graphics processor"),
            Entity::with_id("2", "CPU"),
            Entity::with_id("3", "GPU").described("graphics processor"),
        ];
        let rec = Recording {
            seen: Mutex::new(Vec::new()),
        };
        let table = embed_descriptions(&entities, &rec, EmbedInput::NameAndDescription).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(
            *rec.seen.lock().unwrap(),
            vec!["GPU: graphics processor", "CPU", "GPU: graphics processor"]
        );
        assert_eq!(table.get("1"), table.get("3"));
    }

    #[test]
    fn mock_embedder_normalizes() {
        let m = MockEmbedder::new(8);
        assert_eq!(
            m.vector("Large  Language Models"),
            m.vector("large language models")
        );
        assert_ne!(
            m.vector("large language models"),
            m.vector("small language models")
        );
        assert!(m.embed(&[]).is_err());
    }
}
