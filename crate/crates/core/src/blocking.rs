//! Candidate blocks: semantic (k-means over embeddings), type-based, and
//! structural (shared-neighbor) blocking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::BlockingError;
use crate::graph::{EntityId, KnowledgeGraph};
use crate::kmeans::kmeans;

pub const DEFAULT_MAX_BLOCK_SIZE: usize = 200;
const KMEANS_MAX_ITERS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Semantic,
    Type,
    Structural,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub provenance: Provenance,
    /// Type label for type blocks, pivot entity id for structural blocks.
    pub origin: Option<String>,
    pub members: BTreeSet<EntityId>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockingStrategy {
    #[default]
    Semantic,
    Type,
    Structural,
}

/// `max(1, round(sqrt(n / 10)))`, rounding halves up.
pub fn semantic_cluster_count(entity_count: usize) -> usize {
    let k = ((entity_count as f64 / 10.0).sqrt() + 0.5).floor() as usize;
    k.max(1)
}

fn vectors_for<'a>(
    table: &EmbeddingTable,
    ids: impl IntoIterator<Item = &'a EntityId>,
) -> Result<BTreeMap<EntityId, Vec<f64>>, BlockingError> {
    ids.into_iter()
        .map(|id| {
            table
                .get(id.as_str())
                .map(|v| (id.clone(), v.to_vec()))
                .ok_or_else(|| BlockingError::Coverage(id.clone()))
        })
        .collect()
}

pub fn semantic_blocks(
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    seed: u64,
) -> Result<Vec<Block>, BlockingError> {
    if graph.entity_count() == 0 {
        return Ok(Vec::new());
    }
    let vectors = vectors_for(table, graph.entity_ids())?;
    let k = semantic_cluster_count(graph.entity_count());
    let result = kmeans(&vectors, k, seed, KMEANS_MAX_ITERS)?;
    Ok(result
        .clusters()
        .into_iter()
        .enumerate()
        .map(|(id, members)| Block {
            id,
            provenance: Provenance::Semantic,
            origin: None,
            members: members.into_iter().collect(),
        })
        .collect())
}

pub fn type_blocks(
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    max_block_size: usize,
    seed: u64,
) -> Result<Vec<Block>, BlockingError> {
    if max_block_size < 2 {
        return Err(BlockingError::BlockSize(max_block_size));
    }
    let mut by_type: BTreeMap<&str, Vec<EntityId>> = BTreeMap::new();
    for e in graph.entities() {
        by_type
            .entry(e.type_label())
            .or_default()
            .push(e.id.clone());
    }
    let mut blocks = Vec::new();
    for (label, members) in by_type {
        let parts = if members.len() > max_block_size {
            let vectors = vectors_for(table, &members)?;
            let k = members.len().div_ceil(max_block_size);
            kmeans(&vectors, k, seed, KMEANS_MAX_ITERS)?.clusters()
        } else {
            vec![members]
        };
        for part in parts {
            blocks.push(Block {
                id: blocks.len(),
                provenance: Provenance::Type,
                origin: Some(label.to_owned()),
                members: part.into_iter().collect(),
            });
        }
    }
    Ok(blocks)
}

/// One block per entity with at least two neighbors; repeated member sets are
/// kept once, under the first pivot in id order.
pub fn structural_blocks(graph: &KnowledgeGraph) -> Vec<Block> {
    let mut seen = BTreeSet::new();
    let mut blocks = Vec::new();
    for (pivot, neighbors) in graph.adjacency() {
        if neighbors.len() < 2 || !seen.insert(neighbors.clone()) {
            continue;
        }
        blocks.push(Block {
            id: blocks.len(),
            provenance: Provenance::Structural,
            origin: Some(pivot.to_string()),
            members: neighbors,
        });
    }
    blocks
}

pub fn build_blocks(
    strategy: BlockingStrategy,
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    max_block_size: usize,
    seed: u64,
) -> Result<Vec<Block>, BlockingError> {
    match strategy {
        BlockingStrategy::Semantic => semantic_blocks(graph, table, seed),
        BlockingStrategy::Type => type_blocks(graph, table, max_block_size, seed),
        BlockingStrategy::Structural => Ok(structural_blocks(graph)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ModelTag;
    use crate::graph::{Entity, Triple};

    fn ids(list: &[&str]) -> BTreeSet<EntityId> {
        list.iter().map(|s| EntityId::from(*s)).collect()
    }

    fn table_for(graph: &KnowledgeGraph) -> EmbeddingTable {
        let vectors = graph
            .entities()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), vec![i as f64, (i * i) as f64 * 0.1]))
            .collect();
        EmbeddingTable::new(ModelTag::External, 2, vectors, None).unwrap()
    }

    fn named(n: usize) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            (0..n).map(|i| Entity::named(format!("e{i:04}"))).collect(),
            vec![],
        )
    }

    #[test]
    fn cluster_count_formula() {
        assert_eq!(semantic_cluster_count(1000), 10);
        assert_eq!(semantic_cluster_count(9), 1);
        assert_eq!(semantic_cluster_count(40), 2);
        assert_eq!(semantic_cluster_count(0), 1);
        // sqrt(22.5) = 4.74 -> 5
        assert_eq!(semantic_cluster_count(225), 5);
    }

    #[test]
    fn semantic_blocks_partition() {
        let g = named(9);
        let blocks = semantic_blocks(&g, &table_for(&g), 1).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].members.len(), 9);

        let g = named(40);
        let blocks = semantic_blocks(&g, &table_for(&g), 1).unwrap();
        assert_eq!(blocks.len(), 2);
        let total: usize = blocks.iter().map(|b| b.members.len()).sum();
        assert_eq!(total, 40);
        assert!(blocks[0].members.is_disjoint(&blocks[1].members));
    }

    #[test]
    fn semantic_blocks_need_coverage() {
        let g = named(3);
        let empty = EmbeddingTable::new(ModelTag::External, 2, BTreeMap::new(), None).unwrap();
        assert!(matches!(
            semantic_blocks(&g, &empty, 0),
            Err(BlockingError::Coverage(_))
        ));
    }

    #[test]
    fn type_blocks_by_label() {
        let mut entities: Vec<Entity> = (0..3)
            .map(|i| Entity::named(format!("p{i}")).typed("PERSON"))
            .collect();
        entities.extend((0..2).map(|i| Entity::named(format!("o{i}")).typed("ORG")));
        let g = KnowledgeGraph::from_parts(entities, vec![]);
        let blocks = type_blocks(&g, &table_for(&g), 10, 0).unwrap();
        let mut sizes: Vec<_> = blocks
            .iter()
            .map(|b| (b.origin.clone().unwrap(), b.members.len()))
            .collect();
        sizes.sort();
        assert_eq!(sizes, vec![("ORG".to_owned(), 2), ("PERSON".to_owned(), 3)]);
    }

    #[test]
    fn oversized_type_is_subdivided() {
        let g = KnowledgeGraph::from_parts(
            (0..25)
                .map(|i| Entity::named(format!("x{i:02}")).typed("T"))
                .collect(),
            vec![],
        );
        let blocks = type_blocks(&g, &table_for(&g), 10, 0).unwrap();
        assert_eq!(blocks.len(), 3);
        let union: BTreeSet<_> = blocks
            .iter()
            .flat_map(|b| b.members.iter().cloned())
            .collect();
        assert_eq!(union.len(), 25);
        assert!(blocks.iter().all(|b| b.origin.as_deref() == Some("T")));
    }

    #[test]
    fn untyped_entities_share_unknown_block() {
        let g = named(4);
        let blocks = type_blocks(&g, &table_for(&g), 10, 0).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(
            blocks[0].origin.as_deref(),
            Some(crate::graph::UNKNOWN_TYPE)
        );
        assert!(matches!(
            type_blocks(&g, &table_for(&g), 1, 0),
            Err(BlockingError::BlockSize(1))
        ));
    }

    fn edges(pairs: &[(&str, &str)]) -> KnowledgeGraph {
        let names: BTreeSet<&str> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
        KnowledgeGraph::from_parts(
            names.into_iter().map(Entity::named).collect(),
            pairs
                .iter()
                .map(|(a, b)| Triple::new(*a, "r", *b))
                .collect(),
        )
    }

    #[test]
    fn structural_star_path_triangle() {
        let star = structural_blocks(&edges(&[("c", "l1"), ("c", "l2"), ("l3", "c")]));
        assert_eq!(star.len(), 1);
        assert_eq!(star[0].members, ids(&["l1", "l2", "l3"]));
        assert_eq!(star[0].origin.as_deref(), Some("c"));

        let path = structural_blocks(&edges(&[("a", "b"), ("b", "c")]));
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].members, ids(&["a", "c"]));

        let tri = structural_blocks(&edges(&[("a", "b"), ("b", "c"), ("c", "a")]));
        let sets: BTreeSet<_> = tri.into_iter().map(|b| b.members).collect();
        assert_eq!(
            sets,
            [ids(&["b", "c"]), ids(&["a", "c"]), ids(&["a", "b"])]
                .into_iter()
                .collect()
        );
    }

    #[test]
    fn structural_dedups_identical_sets() {
        // x and y both neighbor exactly {a, b}
        let blocks = structural_blocks(&edges(&[("x", "a"), ("x", "b"), ("y", "a"), ("y", "b")]));
        let sets: Vec<_> = blocks.iter().map(|b| b.members.clone()).collect();
        assert_eq!(sets.iter().filter(|s| **s == ids(&["a", "b"])).count(), 1);
    }
}
