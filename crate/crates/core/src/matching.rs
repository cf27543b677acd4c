//! Pairwise similarity under five modes and transitive grouping of matches.
//!
//! Modes:
//! - `ego`: the entity's own vector.
//! - `neighbor`: mean of its neighbors' vectors.
//! - `type_aware_neighbor`: one neighbor mean per entity type.
//! - `ego_plus_neighbor` / `ego_plus_type_aware`: the ego vector concatenated
//!   with the respective neighbor vector.
//!
//! Matched pairs are grouped with union-find, either by a similarity
//! threshold (strictly greater than δ) or greedily, most similar first, until
//! a target fraction of entities has been merged away.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::Block;
use crate::embed::EmbeddingTable;
use crate::error::{GraphError, MatchingError};
use crate::graph::{EntityId, KnowledgeGraph};
use crate::unionfind::UnionFind;
use crate::util::{cosine, keyed_rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    #[default]
    Ego,
    Neighbor,
    TypeAwareNeighbor,
    EgoPlusNeighbor,
    EgoPlusTypeAware,
}

impl SimilarityMode {
    pub const ALL: [SimilarityMode; 5] = [
        SimilarityMode::Ego,
        SimilarityMode::Neighbor,
        SimilarityMode::TypeAwareNeighbor,
        SimilarityMode::EgoPlusNeighbor,
        SimilarityMode::EgoPlusTypeAware,
    ];
}

/// Denominator for the type-aware neighbor score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeAveraging {
    /// Average over types present in both neighborhoods.
    #[default]
    SharedTypes,
    /// Average over every type in the graph; absent types contribute 0.
    AllTypes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub a: EntityId,
    pub b: EntityId,
    #[serde(rename = "sim")]
    pub similarity: f64,
}

impl ScoredPair {
    /// Orders the endpoints so that `a < b`.
    pub fn new(x: EntityId, y: EntityId, similarity: f64) -> Self {
        if x <= y {
            Self {
                a: x,
                b: y,
                similarity,
            }
        } else {
            Self {
                a: y,
                b: x,
                similarity,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchGroup {
    pub members: BTreeSet<EntityId>,
    pub canonical: EntityId,
}

impl MatchGroup {
    pub fn non_canonical(&self) -> impl Iterator<Item = &EntityId> {
        self.members.iter().filter(move |m| **m != self.canonical)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalPolicy {
    #[default]
    SeededRandom,
    MinId,
}

pub fn select_canonical(
    members: &BTreeSet<EntityId>,
    policy: CanonicalPolicy,
    seed: u64,
) -> Result<EntityId, MatchingError> {
    let first = members.first().ok_or(MatchingError::EmptyGroup)?;
    Ok(match policy {
        CanonicalPolicy::MinId => first.clone(),
        CanonicalPolicy::SeededRandom => {
            let labels: Vec<&str> = members.iter().map(EntityId::as_str).collect();
            let pick = keyed_rng(seed, &labels).random_range(0..members.len());
            members.iter().nth(pick).expect("index below len").clone()
        }
    })
}

/// Precomputed neighborhoods and type ordering for scoring many pairs.
pub struct SimilarityContext<'a> {
    table: &'a EmbeddingTable,
    mode: SimilarityMode,
    averaging: TypeAveraging,
    adjacency: BTreeMap<EntityId, BTreeSet<EntityId>>,
    type_of: HashMap<EntityId, String>,
    types: Vec<String>,
}

impl<'a> SimilarityContext<'a> {
    pub fn new(graph: &KnowledgeGraph, table: &'a EmbeddingTable, mode: SimilarityMode) -> Self {
        Self {
            table,
            mode,
            averaging: TypeAveraging::default(),
            adjacency: graph.adjacency(),
            type_of: graph
                .entities()
                .iter()
                .map(|e| (e.id.clone(), e.type_label().to_owned()))
                .collect(),
            types: graph.type_set().into_iter().collect(),
        }
    }

    pub fn with_averaging(mut self, averaging: TypeAveraging) -> Self {
        self.averaging = averaging;
        self
    }

    fn ego(&self, e: &EntityId) -> Result<&'a [f64], MatchingError> {
        self.table
            .get(e.as_str())
            .ok_or_else(|| MatchingError::Coverage(e.clone()))
    }

    fn neighbors(&self, e: &EntityId) -> Result<&BTreeSet<EntityId>, MatchingError> {
        self.adjacency
            .get(e)
            .ok_or_else(|| GraphError::UnknownEntity(e.clone()).into())
    }

    fn neighbor_mean(&self, e: &EntityId) -> Result<Vec<f64>, MatchingError> {
        let mut mean = vec![0.0; self.table.vector_len()];
        let neighbors = self.neighbors(e)?;
        for n in neighbors {
            mean.iter_mut().zip(self.ego(n)?).for_each(|(m, x)| *m += x);
        }
        if !neighbors.is_empty() {
            mean.iter_mut().for_each(|m| *m /= neighbors.len() as f64);
        }
        Ok(mean)
    }

    /// Mean neighbor vector per type, for types present in the neighborhood.
    fn type_means(&self, e: &EntityId) -> Result<BTreeMap<&str, Vec<f64>>, MatchingError> {
        let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
        for n in self.neighbors(e)? {
            let label = self
                .type_of
                .get(n)
                .map(String::as_str)
                .ok_or_else(|| GraphError::UnknownEntity(n.clone()))?;
            let slot = sums
                .entry(label)
                .or_insert_with(|| (vec![0.0; self.table.vector_len()], 0));
            slot.0
                .iter_mut()
                .zip(self.ego(n)?)
                .for_each(|(s, x)| *s += x);
            slot.1 += 1;
        }
        Ok(sums
            .into_iter()
            .map(|(t, (mut v, c))| {
                v.iter_mut().for_each(|x| *x /= c as f64);
                (t, v)
            })
            .collect())
    }

    fn type_concat(&self, e: &EntityId) -> Result<Vec<f64>, MatchingError> {
        let means = self.type_means(e)?;
        let width = self.table.vector_len();
        let mut out = Vec::with_capacity(width * self.types.len());
        for t in &self.types {
            match means.get(t.as_str()) {
                Some(v) => out.extend_from_slice(v),
                None => out.extend(std::iter::repeat_n(0.0, width)),
            }
        }
        Ok(out)
    }

    pub fn entity_vector(&self, e: &EntityId) -> Result<Vec<f64>, MatchingError> {
        Ok(match self.mode {
            SimilarityMode::Ego => {
                self.neighbors(e)?;
                self.ego(e)?.to_vec()
            }
            SimilarityMode::Neighbor => self.neighbor_mean(e)?,
            SimilarityMode::TypeAwareNeighbor => self.type_concat(e)?,
            SimilarityMode::EgoPlusNeighbor => {
                let mut v = self.ego(e)?.to_vec();
                v.extend(self.neighbor_mean(e)?);
                v
            }
            SimilarityMode::EgoPlusTypeAware => {
                let mut v = self.ego(e)?.to_vec();
                v.extend(self.type_concat(e)?);
                v
            }
        })
    }

    pub fn similarity(&self, a: &EntityId, b: &EntityId) -> Result<f64, MatchingError> {
        if self.mode != SimilarityMode::TypeAwareNeighbor {
            return Ok(cosine(&self.entity_vector(a)?, &self.entity_vector(b)?));
        }
        let ma = self.type_means(a)?;
        let mb = self.type_means(b)?;
        let total: f64 = ma
            .iter()
            .filter_map(|(t, va)| mb.get(t).map(|vb| cosine(va, vb)))
            .sum();
        let denominator = match self.averaging {
            TypeAveraging::SharedTypes => ma.keys().filter(|t| mb.contains_key(*t)).count(),
            TypeAveraging::AllTypes => self.types.len(),
        };
        Ok(if denominator == 0 {
            0.0
        } else {
            total / denominator as f64
        })
    }

    /// Scores pairs in parallel; output order follows input order.
    pub fn score_pairs(
        &self,
        pairs: &[(EntityId, EntityId)],
    ) -> Result<Vec<ScoredPair>, MatchingError> {
        pairs
            .par_iter()
            .map(|(a, b)| {
                Ok(ScoredPair::new(
                    a.clone(),
                    b.clone(),
                    self.similarity(a, b)?,
                ))
            })
            .collect()
    }
}

pub fn entity_vector(
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    e: &EntityId,
    mode: SimilarityMode,
) -> Result<Vec<f64>, MatchingError> {
    SimilarityContext::new(graph, table, mode).entity_vector(e)
}

pub fn pair_similarity(
    graph: &KnowledgeGraph,
    table: &EmbeddingTable,
    a: &EntityId,
    b: &EntityId,
    mode: SimilarityMode,
) -> Result<f64, MatchingError> {
    SimilarityContext::new(graph, table, mode).similarity(a, b)
}

/// Every within-block unordered pair, deduplicated across blocks, with `a < b`.
pub fn candidate_pairs(blocks: &[Block]) -> BTreeSet<(EntityId, EntityId)> {
    let mut pairs = BTreeSet::new();
    for block in blocks {
        let members: Vec<&EntityId> = block.members.iter().collect();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                pairs.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    pairs
}

/// How canonical members are picked for each group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalChoice {
    pub policy: CanonicalPolicy,
    pub seed: u64,
}

fn groups_from_unions(
    ids: &[EntityId],
    uf: &mut UnionFind,
    touched: &BTreeSet<usize>,
    canon: CanonicalChoice,
) -> Vec<MatchGroup> {
    let mut classes: BTreeMap<usize, BTreeSet<EntityId>> = BTreeMap::new();
    for &i in touched {
        classes
            .entry(uf.find(i))
            .or_default()
            .insert(ids[i].clone());
    }
    let mut groups: Vec<MatchGroup> = classes
        .into_values()
        .map(|members| {
            let canonical = select_canonical(&members, canon.policy, canon.seed)
                .expect("classes are non-empty");
            MatchGroup { members, canonical }
        })
        .collect();
    groups.sort_by(|x, y| x.members.first().cmp(&y.members.first()));
    groups
}

struct Indexer {
    ids: Vec<EntityId>,
    index: HashMap<EntityId, usize>,
}

impl Indexer {
    fn new(pairs: &[ScoredPair]) -> Self {
        let set: BTreeSet<&EntityId> = pairs.iter().flat_map(|p| [&p.a, &p.b]).collect();
        let ids: Vec<EntityId> = set.into_iter().cloned().collect();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self { ids, index }
    }
}

/// Groups entities joined by pairs whose similarity is strictly above `delta`.
/// Entities in no passing pair are left out.
pub fn group_by_threshold(
    pairs: &[ScoredPair],
    delta: f64,
    canon: CanonicalChoice,
) -> Vec<MatchGroup> {
    let indexer = Indexer::new(pairs);
    let mut uf = UnionFind::new(indexer.ids.len());
    let mut touched = BTreeSet::new();
    for p in pairs.iter().filter(|p| p.similarity > delta && p.a != p.b) {
        let (a, b) = (indexer.index[&p.a], indexer.index[&p.b]);
        uf.union(a, b);
        touched.insert(a);
        touched.insert(b);
    }
    groups_from_unions(&indexer.ids, &mut uf, &touched, canon)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioGrouping {
    pub groups: Vec<MatchGroup>,
    /// Unions that joined two distinct sets; each removes one prospective entity.
    pub merges: usize,
    pub target_merges: usize,
    pub achieved_ratio: f64,
}

/// Greedy union in descending similarity (ties by pair order) until
/// `floor(ratio * entity_count)` merges are made or eligible pairs run out.
/// Only pairs with positive similarity are eligible.
pub fn group_by_target_ratio(
    pairs: &[ScoredPair],
    entity_count: usize,
    ratio: f64,
    canon: CanonicalChoice,
) -> Result<RatioGrouping, MatchingError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(MatchingError::Ratio(ratio));
    }
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    let target_merges = (ratio * entity_count as f64 + 1e-9).floor() as usize;

    let mut ordered: Vec<&ScoredPair> = pairs
        .iter()
        .filter(|p| p.similarity > 0.0 && p.a != p.b)
        .collect();
    ordered.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });

    let indexer = Indexer::new(pairs);
    let mut uf = UnionFind::new(indexer.ids.len());
    let mut touched = BTreeSet::new();
    let mut merges = 0;
    for p in ordered {
        if merges >= target_merges {
            break;
        }
        let (a, b) = (indexer.index[&p.a], indexer.index[&p.b]);
        if uf.union(a, b) {
            merges += 1;
            touched.insert(a);
            touched.insert(b);
        }
    }
    let achieved_ratio = if entity_count == 0 {
        0.0
    } else {
        merges as f64 / entity_count as f64
    };
    Ok(RatioGrouping {
        groups: groups_from_unions(&indexer.ids, &mut uf, &touched, canon),
        merges,
        target_merges,
        achieved_ratio,
    })
}
