//! Knowledge-graph data model.
//!
//! A [`KnowledgeGraph`] is a set of entities plus an ordered list of typed
//! relation triples. Triples keep their direction in storage, but neighborhood
//! and connectivity queries treat every triple as an undirected edge.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Type label given to entities that carry no type.
pub const UNKNOWN_TYPE: &str = "UNKNOWN";

/// Opaque entity identifier, unique within one graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(value: &str) -> Self {
        Self(value.to_owned())
    }
}

impl From<String> for EntityId {
    fn from(value: String) -> Self {
        Self(value)
    }
}

impl std::borrow::Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entity {
    pub id: EntityId,
    /// Surface form as extracted.
    pub name: String,
    pub entity_type: Option<String>,
    pub description: String,
    pub source_chunk: Option<String>,
}

impl Entity {
    /// Entity whose name doubles as its id, with no type and no description.
    pub fn named(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            id: EntityId::new(name.clone()),
            name,
            entity_type: None,
            description: String::new(),
            source_chunk: None,
        }
    }

    pub fn with_id(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: EntityId::new(id),
            name: name.into(),
            entity_type: None,
            description: String::new(),
            source_chunk: None,
        }
    }

    pub fn typed(mut self, entity_type: impl Into<String>) -> Self {
        self.entity_type = Some(entity_type.into());
        self
    }

    pub fn described(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn in_chunk(mut self, chunk: impl Into<String>) -> Self {
        self.source_chunk = Some(chunk.into());
        self
    }

    /// The type label, with untyped entities mapped to [`UNKNOWN_TYPE`].
    pub fn type_label(&self) -> &str {
        self.entity_type.as_deref().unwrap_or(UNKNOWN_TYPE)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub source: EntityId,
    pub relation: String,
    pub target: EntityId,
    pub description: String,
    pub source_chunk: Option<String>,
}

impl Triple {
    pub fn new(
        source: impl Into<EntityId>,
        relation: impl Into<String>,
        target: impl Into<EntityId>,
    ) -> Self {
        Self {
            source: source.into(),
            relation: relation.into(),
            target: target.into(),
            description: String::new(),
            source_chunk: None,
        }
    }

    pub fn described(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn in_chunk(mut self, chunk: impl Into<String>) -> Self {
        self.source_chunk = Some(chunk.into());
        self
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            source: self.source.clone(),
            relation: self.relation.clone(),
            target: self.target.clone(),
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

/// Identity of a triple, ignoring its evidence text.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleKey {
    pub source: EntityId,
    pub relation: String,
    pub target: EntityId,
}

impl TripleKey {
    pub fn new(
        source: impl Into<EntityId>,
        relation: impl Into<String>,
        target: impl Into<EntityId>,
    ) -> Self {
        Self {
            source: source.into(),
            relation: relation.into(),
            target: target.into(),
        }
    }
}

impl fmt::Display for TripleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.source, self.relation, self.target)
    }
}

/// One broken invariant found by [`KnowledgeGraph::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyEntityId {
        position: usize,
    },
    DuplicateEntityId {
        id: EntityId,
    },
    EmptyEntityName {
        id: EntityId,
    },
    DanglingEndpoint {
        triple: TripleKey,
        missing: EntityId,
    },
    EmptyRelation {
        triple: TripleKey,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyEntityId { position } => {
                write!(f, "entity at position {position} has an empty id")
            }
            Violation::DuplicateEntityId { id } => write!(f, "duplicate entity id `{id}`"),
            Violation::EmptyEntityName { id } => write!(f, "entity `{id}` has an empty name"),
            Violation::DanglingEndpoint { triple, missing } => {
                write!(f, "triple {triple} references unknown entity `{missing}`")
            }
            Violation::EmptyRelation { triple } => {
                write!(f, "triple {triple} has an empty relation label")
            }
        }
    }
}

/// Entities, triples and a lookup index over entity ids.
///
/// Equality is structural: two graphs are equal when they hold the same
/// entities and the same multiset of triples, regardless of insertion order.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    triples: Vec<Triple>,
    index: HashMap<EntityId, usize>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assembles a graph without checking invariants; see [`validate`](Self::validate).
    /// When ids repeat, lookups resolve to the first occurrence.
    pub fn from_parts(entities: Vec<Entity>, triples: Vec<Triple>) -> Self {
        let mut index = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            index.entry(e.id.clone()).or_insert(i);
        }
        Self {
            entities,
            triples,
            index,
        }
    }

    /// Assembles a graph and rejects it if any invariant is broken.
    pub fn try_from_parts(entities: Vec<Entity>, triples: Vec<Triple>) -> Result<Self, GraphError> {
        let graph = Self::from_parts(entities, triples);
        let violations = graph.validate();
        if violations.is_empty() {
            Ok(graph)
        } else {
            Err(GraphError::Invalid(violations))
        }
    }

    pub fn into_parts(self) -> (Vec<Entity>, Vec<Triple>) {
        (self.entities, self.triples)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.triples.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.index.get(id).map(|&i| &self.entities[i])
    }

    pub fn get(&self, id: &str) -> Result<&Entity, GraphError> {
        self.entity(id)
            .ok_or_else(|| GraphError::UnknownEntity(EntityId::new(id)))
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.iter().map(|e| &e.id)
    }

    /// Ω: every type label in use, with untyped entities counted as [`UNKNOWN_TYPE`].
    pub fn type_set(&self) -> BTreeSet<String> {
        self.entities
            .iter()
            .map(|e| e.type_label().to_owned())
            .collect()
    }

    pub fn relation_labels(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.relation.as_str()).collect()
    }

    pub fn add_entity(&mut self, entity: Entity) {
        self.index
            .entry(entity.id.clone())
            .or_insert(self.entities.len());
        self.entities.push(entity);
    }

    pub fn add_triple(&mut self, triple: Triple) {
        self.triples.push(triple);
    }

    /// All entities adjacent to `id` in either direction.
    pub fn neighbors(&self, id: &str) -> Result<BTreeSet<EntityId>, GraphError> {
        if !self.contains(id) {
            return Err(GraphError::UnknownEntity(EntityId::new(id)));
        }
        let mut out = BTreeSet::new();
        for t in &self.triples {
            if t.source.as_str() == id {
                out.insert(t.target.clone());
            }
            if t.target.as_str() == id {
                out.insert(t.source.clone());
            }
        }
        Ok(out)
    }

    /// Neighbor sets for every entity at once, in one pass over the triples.
    pub fn adjacency(&self) -> BTreeMap<EntityId, BTreeSet<EntityId>> {
        let mut adj: BTreeMap<EntityId, BTreeSet<EntityId>> = self
            .entities
            .iter()
            .map(|e| (e.id.clone(), BTreeSet::new()))
            .collect();
        for t in &self.triples {
            if let Some(set) = adj.get_mut(&t.source) {
                set.insert(t.target.clone());
            }
            if let Some(set) = adj.get_mut(&t.target) {
                set.insert(t.source.clone());
            }
        }
        adj
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut seen = BTreeSet::new();
        for (position, e) in self.entities.iter().enumerate() {
            if e.id.as_str().is_empty() {
                violations.push(Violation::EmptyEntityId { position });
            }
            if !seen.insert(&e.id) {
                violations.push(Violation::DuplicateEntityId { id: e.id.clone() });
            }
            if e.name.is_empty() {
                violations.push(Violation::EmptyEntityName { id: e.id.clone() });
            }
        }
        for t in &self.triples {
            if t.relation.is_empty() {
                violations.push(Violation::EmptyRelation { triple: t.key() });
            }
            for endpoint in [&t.source, &t.target] {
                if !self.contains(endpoint.as_str()) {
                    violations.push(Violation::DanglingEndpoint {
                        triple: t.key(),
                        missing: endpoint.clone(),
                    });
                }
            }
        }
        violations
    }

    /// Weakly connected components, each sorted, listed by smallest member.
    pub fn connected_components(&self) -> Vec<BTreeSet<EntityId>> {
        let n = self.entities.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for t in &self.triples {
            if let (Some(&a), Some(&b)) = (self.index.get(&t.source), self.index.get(&t.target)) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<EntityId>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups
                .entry(root)
                .or_default()
                .insert(self.entities[i].id.clone());
        }
        let mut components: Vec<_> = groups.into_values().collect();
        components.sort();
        components
    }

    /// For each connected component, the set of source chunks its entities came from.
    pub fn component_chunks(&self) -> Vec<BTreeSet<Option<String>>> {
        self.connected_components()
            .iter()
            .map(|c| {
                c.iter()
                    .filter_map(|id| self.entity(id.as_str()))
                    .map(|e| e.source_chunk.clone())
                    .collect()
            })
            .collect()
    }

    pub fn stats(&self, tokenizer: impl Fn(&str) -> usize) -> GraphStats {
        let mut per_type_counts = BTreeMap::new();
        let mut total_tokens = 0usize;
        for e in &self.entities {
            *per_type_counts
                .entry(e.type_label().to_owned())
                .or_insert(0) += 1;
            total_tokens += tokenizer(&e.description);
        }
        let avg_description_tokens = if self.entities.is_empty() {
            0.0
        } else {
            total_tokens as f64 / self.entities.len() as f64
        };
        GraphStats {
            entity_count: self.entities.len(),
            triple_count: self.triples.len(),
            relation_label_count: self.relation_labels().len(),
            avg_description_tokens,
            per_type_counts,
        }
    }

    /// Copy with entities sorted by id and triples sorted by key then evidence.
    pub fn canonicalized(&self) -> Self {
        let mut entities = self.entities.clone();
        entities.sort();
        let mut triples = self.triples.clone();
        triples.sort();
        Self::from_parts(entities, triples)
    }
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        if self.entities.len() != other.entities.len() || self.triples.len() != other.triples.len()
        {
            return false;
        }
        let a = self.canonicalized();
        let b = other.canonicalized();
        a.entities == b.entities && a.triples == b.triples
    }
}

impl Eq for KnowledgeGraph {}

/// Whitespace-delimited token count used for statistics and description budgets.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entity_count: usize,
    pub triple_count: usize,
    pub relation_label_count: usize,
    pub avg_description_tokens: f64,
    pub per_type_counts: BTreeMap<String, usize>,
}
