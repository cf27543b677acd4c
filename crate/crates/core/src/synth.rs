//! Synthetic noisy graphs with planted duplicates and erroneous triples, and
//! pairwise metrics against the planted ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, SynthError};
use crate::graph::{Entity, EntityId, KnowledgeGraph, Triple, TripleKey};
use crate::matching::MatchGroup;
use crate::reflection::BAD_MARKER;

const ADJECTIVES: [&str; 26] = [
    "Adaptive",
    "Binary",
    "Central",
    "Digital",
    "Elastic",
    "Federal",
    "Global",
    "Hybrid",
    "Integrated",
    "Joint",
    "Kinetic",
    "Large",
    "Modular",
    "Neural",
    "Open",
    "Public",
    "Quantum",
    "Regional",
    "Solar",
    "Thermal",
    "Urban",
    "Virtual",
    "Wireless",
    "Xenial",
    "Young",
    "Zonal",
];
const SUBJECTS: [&str; 26] = [
    "Audit",
    "Budget",
    "Climate",
    "Data",
    "Energy",
    "Finance",
    "Grain",
    "Health",
    "Irrigation",
    "Justice",
    "Knowledge",
    "Language",
    "Market",
    "Network",
    "Ocean",
    "Policy",
    "Quality",
    "Research",
    "Soil",
    "Trade",
    "Utility",
    "Vaccine",
    "Water",
    "Yield",
    "Zoning",
    "Labor",
];
const KINDS: [&str; 26] = [
    "Agencies",
    "Boards",
    "Councils",
    "Directives",
    "Engines",
    "Forums",
    "Grids",
    "Hubs",
    "Indexes",
    "Journals",
    "Kits",
    "Laws",
    "Models",
    "Networks",
    "Offices",
    "Programs",
    "Quotas",
    "Reports",
    "Systems",
    "Treaties",
    "Units",
    "Ventures",
    "Works",
    "Zones",
    "Yards",
    "Exchanges",
];
const TYPES: [&str; 5] = ["ORGANIZATION", "CONCEPT", "EVENT", "LOCATION", "PERSON"];
const RELATIONS: [&str; 8] = [
    "supports",
    "regulates",
    "funds",
    "depends on",
    "reports to",
    "measures",
    "produces",
    "located in",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Casing,
    Whitespace,
    Abbreviation,
    TokenPermutation,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Casing,
        VariantKind::Whitespace,
        VariantKind::Abbreviation,
        VariantKind::TokenPermutation,
    ];

    /// Surface variants of `name` (whitespace-separated tokens), none equal to `name`.
    pub fn variants(self, name: &str) -> Vec<String> {
        let tokens: Vec<&str> = name.split_whitespace().collect();
        let out = match self {
            VariantKind::Casing => vec![name.to_lowercase(), name.to_uppercase()],
            VariantKind::Whitespace => (1..tokens.len())
                .map(|i| format!("{}  {}", tokens[..i].join(" "), tokens[i..].join(" ")))
                .collect(),
            VariantKind::Abbreviation => {
                let initials: Vec<String> = tokens
                    .iter()
                    .filter_map(|t| t.chars().next())
                    .map(|c| c.to_uppercase().to_string())
                    .collect();
                vec![initials.concat(), format!("{}.", initials.join("."))]
            }
            VariantKind::TokenPermutation => {
                let mut perms = Vec::new();
                for shift in 1..tokens.len() {
                    let mut t = tokens.clone();
                    t.rotate_left(shift);
                    perms.push(t.join(" "));
                }
                let mut rev = tokens.clone();
                rev.reverse();
                perms.push(rev.join(" "));
                perms
            }
        };
        let mut seen = HashSet::new();
        out.into_iter()
            .filter(|v| v != name && seen.insert(v.clone()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Total entity count, duplicates included.
    pub base_entities: usize,
    pub duplicate_clusters: usize,
    /// Inclusive `[min, max]` cluster size, the canonical name included.
    pub cluster_size: [usize; 2],
    pub variant_kinds: BTreeSet<VariantKind>,
    pub triples_per_entity: f64,
    pub erroneous_triple_fraction: f64,
    /// Chance that an edge of a cluster member is copied onto each sibling.
    pub sibling_edge_fraction: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            base_entities: 100,
            duplicate_clusters: 20,
            cluster_size: [2, 2],
            variant_kinds: VariantKind::ALL.into_iter().collect(),
            triples_per_entity: 2.0,
            erroneous_triple_fraction: 0.1,
            sibling_edge_fraction: 0.5,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let [min, max] = self.cluster_size;
        let fail = |m: String| Err(SynthError::Infeasible(m));
        if min < 1 || min > max {
            return fail(format!(
                "cluster size range [{min}, {max}] is empty or below 1"
            ));
        }
        for (name, f) in [
            ("erroneous_triple_fraction", self.erroneous_triple_fraction),
            ("sibling_edge_fraction", self.sibling_edge_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return fail(format!("{name} {f} outside [0, 1]"));
            }
        }
        if !(self.triples_per_entity >= 0.0 && self.triples_per_entity.is_finite()) {
            return fail(format!(
                "triples_per_entity {} must be non-negative",
                self.triples_per_entity
            ));
        }
        if self.duplicate_clusters * max > self.base_entities {
            return fail(format!(
                "{} clusters of up to {max} entities exceed {} entities",
                self.duplicate_clusters, self.base_entities
            ));
        }
        if self.duplicate_clusters > 0 && max > 1 && self.variant_kinds.is_empty() {
            return fail("duplicate clusters need at least one variant kind".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub clusters: Vec<BTreeSet<EntityId>>,
    pub bad_triples: BTreeSet<TripleKey>,
}

impl GroundTruth {
    /// Planted bad triples as they read after `groups` are merged.
    pub fn bad_triples_after(&self, groups: &[MatchGroup]) -> BTreeSet<TripleKey> {
        let map: HashMap<&EntityId, &EntityId> = groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |m| (m, &g.canonical)))
            .collect();
        let rename = |id: &EntityId| map.get(id).map_or_else(|| id.clone(), |c| (*c).clone());
        self.bad_triples
            .iter()
            .map(|k| TripleKey {
                source: rename(&k.source),
                relation: k.relation.clone(),
                target: rename(&k.target),
            })
            .collect()
    }
}

fn concept_names(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<&'static str>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let tokens = vec![
            *ADJECTIVES.choose(rng).expect("non-empty"),
            *SUBJECTS.choose(rng).expect("non-empty"),
            *KINDS.choose(rng).expect("non-empty"),
        ];
        if seen.insert(tokens.clone()) {
            out.push(tokens);
        }
    }
    out
}

/// Builds a graph with `duplicate_clusters` planted clusters of surface variants
/// that share their description, random triples, sibling edge copies, and a
/// fraction of triples carrying [`BAD_MARKER`] in their relation.
pub fn generate_noisy_kg(spec: &NoiseSpec) -> Result<(KnowledgeGraph, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [min, max] = spec.cluster_size;
    let sizes: Vec<usize> = (0..spec.duplicate_clusters)
        .map(|_| rng.random_range(min..=max))
        .collect();
    let extra: usize = sizes.iter().map(|s| s - 1).sum();
    let concepts = spec.base_entities - extra;
    if concepts > ADJECTIVES.len() * SUBJECTS.len() * KINDS.len() {
        return Err(SynthError::Infeasible(format!(
            "{concepts} distinct base names requested"
        )));
    }
    let names = concept_names(&mut rng, concepts);
    let kinds: Vec<VariantKind> = spec.variant_kinds.iter().copied().collect();

    let mut used: HashSet<String> = names.iter().map(|t| t.join(" ")).collect();
    let mut entities = Vec::with_capacity(spec.base_entities);
    let mut concept_of: Vec<usize> = Vec::with_capacity(spec.base_entities);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (ci, tokens) in names.iter().enumerate() {
        let name = tokens.join(" ");
        let kind = TYPES[ci % TYPES.len()];
        let description = format!(
            "{name} is a {} entity tracked in record {ci}.",
            kind.to_lowercase()
        );
        let mut members = vec![entities.len()];
        entities.push(
            Entity::named(name.clone())
                .typed(kind)
                .described(description.clone()),
        );
        concept_of.push(ci);
        if let Some(&size) = sizes.get(ci) {
            let mut pool: Vec<String> = kinds.iter().flat_map(|k| k.variants(&name)).collect();
            pool.shuffle(&mut rng);
            let mut seen = HashSet::new();
            pool.retain(|v| !used.contains(v) && seen.insert(v.clone()));
            if pool.len() < size - 1 {
                return Err(SynthError::Infeasible(format!(
                    "only {} distinct variants of `{name}` for a cluster of {size}",
                    pool.len()
                )));
            }
            for v in pool.into_iter().take(size - 1) {
                used.insert(v.clone());
                members.push(entities.len());
                entities.push(Entity::named(v).typed(kind).described(description.clone()));
                concept_of.push(ci);
            }
            clusters.push(members);
        }
    }

    let n = entities.len();
    let target = (spec.triples_per_entity * n as f64).round() as usize;
    let mut keys = HashSet::new();
    let mut triples: Vec<Triple> = Vec::new();
    let mut push = |triples: &mut Vec<Triple>, t: Triple| {
        if keys.insert(t.key()) {
            triples.push(t);
        }
    };
    if n >= 2 && concepts >= 2 {
        let mut attempts = 0;
        while triples.len() < target && attempts < target * 20 {
            attempts += 1;
            let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
            if concept_of[s] == concept_of[d] {
                continue;
            }
            let relation = *RELATIONS.choose(&mut rng).expect("non-empty");
            let description = format!("{} {relation} {}", entities[s].name, entities[d].name);
            push(
                &mut triples,
                Triple::new(entities[s].id.clone(), relation, entities[d].id.clone())
                    .described(description),
            );
        }
    }

    let cluster_of: HashMap<usize, usize> = clusters
        .iter()
        .enumerate()
        .flat_map(|(k, m)| m.iter().map(move |&i| (i, k)))
        .collect();
    let index: HashMap<&EntityId, usize> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (&e.id, i))
        .collect();
    let originals = triples.clone();
    for t in &originals {
        for (end, is_source) in [(&t.source, true), (&t.target, false)] {
            let Some(&k) = cluster_of.get(&index[end]) else {
                continue;
            };
            for &sib in &clusters[k] {
                if entities[sib].id == *end || !rng.random_bool(spec.sibling_edge_fraction) {
                    continue;
                }
                let mut copy = t.clone();
                if is_source {
                    copy.source = entities[sib].id.clone();
                } else {
                    copy.target = entities[sib].id.clone();
                }
                push(&mut triples, copy);
            }
        }
    }

    let bad_count = (spec.erroneous_triple_fraction * triples.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.shuffle(&mut rng);
    let mut bad_triples = BTreeSet::new();
    for &i in order.iter().take(bad_count) {
        let t = &mut triples[i];
        t.relation = format!("{} {BAD_MARKER}", t.relation);
        bad_triples.insert(t.key());
    }

    let truth = GroundTruth {
        clusters: clusters
            .iter()
            .map(|m| m.iter().map(|&i| entities[i].id.clone()).collect())
            .collect(),
        bad_triples,
    };
    Ok((KnowledgeGraph::from_parts(entities, triples), truth))
}

/// Entities and triples extracted from one text chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkExtraction {
    pub chunk: String,
    pub entities: Vec<Entity>,
    pub triples: Vec<Triple>,
}

/// Unions per-chunk extractions, identifying entities only by identical id
/// (first occurrence wins) and triples by identical key.
pub fn assemble_extractions(extractions: &[ChunkExtraction]) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::new();
    let mut keys = HashSet::new();
    for x in extractions {
        for e in &x.entities {
            if !graph.contains(e.id.as_str()) {
                graph.add_entity(e.clone().in_chunk(x.chunk.clone()));
            }
        }
        for t in &x.triples {
            if keys.insert(t.key()) {
                graph.add_triple(t.clone().in_chunk(x.chunk.clone()));
            }
        }
    }
    graph
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkSpec {
    pub chunks: usize,
    pub entities_per_chunk: usize,
    /// Variants of an entity from one chunk planted in a different chunk.
    pub cross_chunk_duplicates: usize,
    pub seed: u64,
}

impl Default for ChunkSpec {
    fn default() -> Self {
        Self {
            chunks: 5,
            entities_per_chunk: 8,
            cross_chunk_duplicates: 3,
            seed: 0,
        }
    }
}

/// Independent per-chunk extractions: each chunk is a connected tree over its
/// own entities, repeated mentions inside a chunk share an id, and every
/// cross-chunk duplicate is a lowercased variant living in another chunk.
pub fn generate_chunked_extractions(
    spec: &ChunkSpec,
) -> Result<(Vec<ChunkExtraction>, GroundTruth), SynthError> {
    if spec.entities_per_chunk == 0 || (spec.cross_chunk_duplicates > 0 && spec.chunks < 2) {
        return Err(SynthError::Infeasible(
            "need entities per chunk, and two chunks for cross-chunk duplicates".into(),
        ));
    }
    if spec.cross_chunk_duplicates > spec.chunks * spec.entities_per_chunk {
        return Err(SynthError::Infeasible(
            "more duplicates than entities".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = concept_names(&mut rng, spec.chunks * spec.entities_per_chunk);
    let mut out: Vec<ChunkExtraction> = (0..spec.chunks)
        .map(|c| {
            let entities: Vec<Entity> = names
                [c * spec.entities_per_chunk..(c + 1) * spec.entities_per_chunk]
                .iter()
                .map(|t| {
                    let name = t.join(" ");
                    let description = format!("{name} as described in chunk {c}.");
                    Entity::named(name).described(description)
                })
                .collect();
            let mut triples = Vec::new();
            for i in 1..entities.len() {
                let parent = rng.random_range(0..i);
                let relation = *RELATIONS.choose(&mut rng).expect("non-empty");
                triples.push(Triple::new(
                    entities[i].id.clone(),
                    relation,
                    entities[parent].id.clone(),
                ));
            }
            // a repeated mention, deduplicated by identity on assembly
            let mut mentions = entities.clone();
            mentions.push(entities[0].clone());
            ChunkExtraction {
                chunk: format!("chunk-{c}"),
                entities: mentions,
                triples,
            }
        })
        .collect();

    let mut clusters = Vec::new();
    let mut picks: Vec<usize> = (0..spec.chunks * spec.entities_per_chunk).collect();
    picks.shuffle(&mut rng);
    for &p in picks.iter().take(spec.cross_chunk_duplicates) {
        let (home, slot) = (p / spec.entities_per_chunk, p % spec.entities_per_chunk);
        let away = (home + 1 + rng.random_range(0..spec.chunks - 1)) % spec.chunks;
        let original = out[home].entities[slot].clone();
        let variant =
            Entity::named(original.name.to_lowercase()).described(original.description.clone());
        let anchor = out[away].entities[rng.random_range(0..spec.entities_per_chunk)]
            .id
            .clone();
        out[away]
            .triples
            .push(Triple::new(variant.id.clone(), "mentioned with", anchor));
        out[away].entities.push(variant.clone());
        clusters.push(BTreeSet::from([original.id, variant.id]));
    }
    Ok((
        out,
        GroundTruth {
            clusters,
            bad_triples: BTreeSet::new(),
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Precision is 1 with no predicted positives, recall is 1 with no actual positives.
    pub fn from_counts(tp: usize, predicted: usize, actual: usize) -> Self {
        let precision = if predicted == 0 {
            1.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            1.0
        } else {
            tp as f64 / actual as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Pairwise precision/recall of `predicted` against `truth` over pairs drawn from `universe`.
pub fn pairwise_scores(
    predicted: &[BTreeSet<EntityId>],
    truth: &[BTreeSet<EntityId>],
    universe: &BTreeSet<EntityId>,
) -> Result<Prf, MetricsError> {
    let mut label: HashMap<&EntityId, usize> = HashMap::new();
    for (i, g) in predicted.iter().enumerate() {
        for m in g.iter().filter(|m| universe.contains(*m)) {
            if label.insert(m, i).is_some() {
                return Err(MetricsError::OverlappingGroups(m.clone()));
            }
        }
    }
    let predicted_pos: usize = predicted
        .iter()
        .map(|g| pairs(g.iter().filter(|m| universe.contains(*m)).count()))
        .sum();
    let mut actual = 0;
    let mut tp = 0;
    for c in truth {
        let inside: Vec<&EntityId> = c.iter().filter(|m| universe.contains(*m)).collect();
        actual += pairs(inside.len());
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for m in inside {
            if let Some(&g) = label.get(m) {
                *overlap.entry(g).or_default() += 1;
            }
        }
        tp += overlap.values().map(|&k| pairs(k)).sum::<usize>();
    }
    Ok(Prf::from_counts(tp, predicted_pos, actual))
}

pub fn resolution_metrics(
    predicted: &[MatchGroup],
    truth: &GroundTruth,
    universe: &BTreeSet<EntityId>,
) -> Result<Prf, MetricsError> {
    let groups: Vec<BTreeSet<EntityId>> = predicted.iter().map(|g| g.members.clone()).collect();
    pairwise_scores(&groups, &truth.clusters, universe)
}

/// Precision/recall of `removed` against the planted bad triples present in `all_triples`.
pub fn reflection_metrics(
    removed: &BTreeSet<TripleKey>,
    truth: &GroundTruth,
    all_triples: &BTreeSet<TripleKey>,
) -> Prf {
    let actual: BTreeSet<&TripleKey> = truth
        .bad_triples
        .iter()
        .filter(|k| all_triples.contains(*k))
        .collect();
    let tp = removed.iter().filter(|k| actual.contains(k)).count();
    Prf::from_counts(tp, removed.len(), actual.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(list: &[&str]) -> BTreeSet<EntityId> {
        list.iter().map(|s| EntityId::from(*s)).collect()
    }

    /// Enumerates every unordered pair of the universe.
    fn brute(
        predicted: &[BTreeSet<EntityId>],
        truth: &[BTreeSet<EntityId>],
        universe: &BTreeSet<EntityId>,
    ) -> Prf {
        let together = |groups: &[BTreeSet<EntityId>], a: &EntityId, b: &EntityId| {
            groups.iter().any(|g| g.contains(a) && g.contains(b))
        };
        let ids: Vec<&EntityId> = universe.iter().collect();
        let (mut tp, mut pp, mut ap) = (0, 0, 0);
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let p = together(predicted, ids[i], ids[j]);
                let t = together(truth, ids[i], ids[j]);
                pp += usize::from(p);
                ap += usize::from(t);
                tp += usize::from(p && t);
            }
        }
        Prf::from_counts(tp, pp, ap)
    }

    #[test]
    fn metric_examples() {
        let u = set(&["a", "b", "c", "d"]);
        let truth = vec![set(&["a", "b", "c"])];
        let m = pairwise_scores(&[set(&["a", "b"]), set(&["c"])], &truth, &u).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0 / 3.0));
        assert!((m.f1 - 0.5).abs() < 1e-12);

        let exact = pairwise_scores(&truth, &truth, &u).unwrap();
        assert_eq!((exact.precision, exact.recall, exact.f1), (1.0, 1.0, 1.0));

        let singletons = pairwise_scores(&[], &[set(&["a", "b"])], &u).unwrap();
        assert_eq!(
            (singletons.precision, singletons.recall, singletons.f1),
            (1.0, 0.0, 0.0)
        );

        assert!(pairwise_scores(&[set(&["a", "b"]), set(&["b", "c"])], &truth, &u).is_err());
    }

    #[test]
    fn metrics_match_brute_force_and_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ids: Vec<String> = (0..9).map(|i| format!("e{i}")).collect();
        let universe: BTreeSet<EntityId> = ids.iter().map(|s| EntityId::from(s.as_str())).collect();
        let random_partition = |rng: &mut ChaCha8Rng| {
            let mut parts: BTreeMap<usize, BTreeSet<EntityId>> = BTreeMap::new();
            for id in &universe {
                parts
                    .entry(rng.random_range(0..5))
                    .or_default()
                    .insert(id.clone());
            }
            parts.into_values().collect::<Vec<_>>()
        };
        for _ in 0..200 {
            let p = random_partition(&mut rng);
            let t = random_partition(&mut rng);
            let fast = pairwise_scores(&p, &t, &universe).unwrap();
            assert_eq!(fast, brute(&p, &t, &universe));
            let swapped = pairwise_scores(&t, &p, &universe).unwrap();
            assert_eq!(
                (fast.precision, fast.recall),
                (swapped.recall, swapped.precision)
            );
        }
    }

    #[test]
    fn reflection_metric_counts() {
        let keys: Vec<TripleKey> = (0..21)
            .map(|i| TripleKey::new("a", format!("r{i}"), "b"))
            .collect();
        let all: BTreeSet<TripleKey> = keys.iter().cloned().collect();
        let truth = GroundTruth {
            clusters: vec![],
            bad_triples: keys[..10].iter().cloned().collect(),
        };
        let removed: BTreeSet<TripleKey> = keys[..11].iter().cloned().collect();
        let m = reflection_metrics(&removed, &truth, &all);
        assert_eq!((m.precision, m.recall), (10.0 / 11.0, 1.0));
        assert_eq!(
            reflection_metrics(&BTreeSet::new(), &truth, &all).recall,
            0.0
        );
        assert_eq!(reflection_metrics(&truth.bad_triples, &truth, &all).f1, 1.0);
    }

    #[test]
    fn variants() {
        let v = VariantKind::Casing.variants("Large Language Models");
        assert_eq!(v[0], "large language models");
        assert!(VariantKind::Abbreviation
            .variants("Large Language Models")
            .contains(&"LLM".to_string()));
        assert!(VariantKind::TokenPermutation
            .variants("a b c")
            .contains(&"c b a".to_string()));
        assert_eq!(
            VariantKind::Whitespace.variants("a b c"),
            vec!["a  b c", "a b  c"]
        );
    }

    #[test]
    fn clean_spec_has_empty_truth() {
        let spec = NoiseSpec {
            duplicate_clusters: 0,
            erroneous_triple_fraction: 0.0,
            ..NoiseSpec::default()
        };
        let (g, truth) = generate_noisy_kg(&spec).unwrap();
        assert!(truth.clusters.is_empty() && truth.bad_triples.is_empty());
        assert!(g.validate().is_empty());
        assert_eq!(g.entity_count(), 100);
    }

    #[test]
    fn generator_is_deterministic_and_consistent() {
        let spec = NoiseSpec {
            cluster_size: [2, 4],
            seed: 3,
            ..NoiseSpec::default()
        };
        let (g1, t1) = generate_noisy_kg(&spec).unwrap();
        let (g2, t2) = generate_noisy_kg(&spec).unwrap();
        assert_eq!(
            crate::io::graph_to_string(&g1),
            crate::io::graph_to_string(&g2)
        );
        assert_eq!(t1, t2);
        assert_eq!(g1.entity_count(), spec.base_entities);
        assert!(g1.validate().is_empty());
        assert_eq!(t1.clusters.len(), 20);
        let keys: BTreeSet<TripleKey> = g1.triples().iter().map(Triple::key).collect();
        assert!(t1.bad_triples.is_subset(&keys));
        assert!(t1
            .bad_triples
            .iter()
            .all(|k| k.relation.contains(BAD_MARKER)));
        let marked = g1
            .triples()
            .iter()
            .filter(|t| t.relation.contains(BAD_MARKER))
            .count();
        assert_eq!(marked, t1.bad_triples.len());
        for c in &t1.clusters {
            let descs: BTreeSet<&str> = c
                .iter()
                .map(|id| g1.entity(id.as_str()).unwrap().description.as_str())
                .collect();
            assert_eq!(descs.len(), 1);
        }
    }

    #[test]
    fn infeasible_specs() {
        let spec = NoiseSpec {
            base_entities: 10,
            duplicate_clusters: 6,
            cluster_size: [2, 2],
            ..NoiseSpec::default()
        };
        assert!(generate_noisy_kg(&spec).is_err());
        let spec = NoiseSpec {
            erroneous_triple_fraction: 1.5,
            ..NoiseSpec::default()
        };
        assert!(generate_noisy_kg(&spec).is_err());
    }

    #[test]
    fn chunks_assemble_into_separate_components() {
        let (x, truth) = generate_chunked_extractions(&ChunkSpec::default()).unwrap();
        let g = assemble_extractions(&x);
        assert!(g.validate().is_empty());
        assert_eq!(g.connected_components().len(), 5);
        assert!(g.component_chunks().iter().all(|c| c.len() == 1));
        assert_eq!(truth.clusters.len(), 3);
    }

    #[test]
    fn bad_triples_follow_merges() {
        let truth = GroundTruth {
            clusters: vec![],
            bad_triples: [TripleKey::new("b", "r", "c")].into(),
        };
        let groups = vec![MatchGroup {
            members: set(&["a", "b"]),
            canonical: "a".into(),
        }];
        assert_eq!(
            truth.bad_triples_after(&groups),
            [TripleKey::new("a", "r", "c")].into()
        );
    }
}
