//! Graph rewriting from match groups.
//!
//! - Direct merge: non-canonical members disappear, their triples are
//!   reattached to the canonical entity and their descriptions are folded into
//!   the canonical description.
//! - Synonym link: the graph is left as is and every non-canonical member gets
//!   a synonym edge to its canonical entity.
//! - Merge with link: triples and descriptions are consolidated as in a direct
//!   merge, but the non-canonical members stay, each attached to its canonical
//!   entity by a synonym edge.
//!
//! Only triples whose endpoints were rewritten are subject to self-loop removal
//! and parallel-edge collapsing; untouched parts of the graph pass through.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{LlmError, MergeError};
use crate::graph::{whitespace_tokens, EntityId, KnowledgeGraph, Triple, TripleKey};
use crate::llm::{ChatMessage, LlmClient};
use crate::matching::MatchGroup;

pub const DEFAULT_SYNONYM_LABEL: &str = "synonym_of";
pub const DEFAULT_TOKEN_BUDGET: usize = 4000;
pub const DESCRIPTION_SEPARATOR: &str = "<SEP>";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    #[default]
    DirectMerge,
    SynonymLink,
    MergeWithLink,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergePlan {
    pub groups: Vec<MatchGroup>,
    pub strategy: MergeStrategy,
    pub synonym_label: String,
    pub token_budget: usize,
}

impl MergePlan {
    pub fn new(groups: Vec<MatchGroup>, strategy: MergeStrategy) -> Self {
        Self {
            groups,
            strategy,
            synonym_label: DEFAULT_SYNONYM_LABEL.to_owned(),
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

/// What a summary is about; selects the entity or the relation prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subject<'a> {
    Entity(&'a str),
    Relation(&'a str),
}

pub trait Summarizer: Sync {
    fn summarize(
        &self,
        subject: Subject<'_>,
        descriptions: &[String],
        token_budget: usize,
    ) -> Result<String, LlmError>;
}

/// Keeps the first `token_budget` whitespace tokens of `text`.
pub fn head_truncate(text: &str, token_budget: usize) -> String {
    text.split_whitespace()
        .take(token_budget)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Offline summarizer: head truncation of the joined descriptions.
#[derive(Clone, Copy, Debug, Default)]
pub struct Truncate;

impl Summarizer for Truncate {
    fn summarize(
        &self,
        _: Subject<'_>,
        descriptions: &[String],
        token_budget: usize,
    ) -> Result<String, LlmError> {
        Ok(head_truncate(
            &descriptions.join(DESCRIPTION_SEPARATOR),
            token_budget,
        ))
    }
}

/// Summarizes through a chat model using the entity or relation prompt.
pub struct LlmSummarizer<'a> {
    client: &'a LlmClient,
}

impl<'a> LlmSummarizer<'a> {
    pub fn new(client: &'a LlmClient) -> Self {
        Self { client }
    }

    pub fn prompt(subject: Subject<'_>, descriptions: &[String]) -> String {
        let (kind, name) = match subject {
            Subject::Entity(name) => ("entity", name),
            Subject::Relation(name) => ("relationship", name),
        };
        format!(
            "You are a helpful assistant. Please summarize the following list of descriptions for the {kind} {name} \
             into a single, coherent paragraph. Combine the key information and remove redundant details.\n\n\
             Descriptions to summarize:\n{}\n\nConcise Summary:",
            descriptions.join("\n")
        )
    }
}

impl Summarizer for LlmSummarizer<'_> {
    fn summarize(
        &self,
        subject: Subject<'_>,
        descriptions: &[String],
        _: usize,
    ) -> Result<String, LlmError> {
        let reply = self
            .client
            .chat_complete(&[ChatMessage::user(Self::prompt(subject, descriptions))])?;
        Ok(reply.trim().to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Aggregated {
    pub text: String,
    /// The joined text exceeded the budget and went through the summarizer.
    pub summarized: bool,
    /// The summarizer failed and the text was truncated instead.
    pub fell_back: bool,
}

/// Joins the distinct non-empty texts (in order) with [`DESCRIPTION_SEPARATOR`];
/// summarizes when the result has more than `token_budget` whitespace tokens.
pub fn aggregate_description(
    texts: &[String],
    subject: Subject<'_>,
    summarizer: &dyn Summarizer,
    token_budget: usize,
) -> Aggregated {
    let mut unique: Vec<String> = Vec::new();
    for t in texts {
        if !t.is_empty() && !unique.contains(t) {
            unique.push(t.clone());
        }
    }
    let joined = unique.join(DESCRIPTION_SEPARATOR);
    if whitespace_tokens(&joined) <= token_budget {
        return Aggregated {
            text: joined,
            summarized: false,
            fell_back: false,
        };
    }
    match summarizer.summarize(subject, &unique, token_budget) {
        Ok(text) => Aggregated {
            text,
            summarized: true,
            fell_back: false,
        },
        Err(e) => {
            log::warn!("summarizer failed ({e}); truncating to {token_budget} tokens");
            Aggregated {
                text: head_truncate(&joined, token_budget),
                summarized: true,
                fell_back: true,
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    pub groups: usize,
    pub entities_removed: usize,
    pub self_loops_dropped: usize,
    pub parallel_triples_collapsed: usize,
    pub synonym_triples_added: usize,
    pub descriptions_summarized: usize,
    pub summarizer_fallbacks: usize,
}

#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub graph: KnowledgeGraph,
    pub stats: MergeStats,
}

/// Maps every non-canonical member present in the graph to its canonical.
fn rewrite_map(
    graph: &KnowledgeGraph,
    plan: &MergePlan,
) -> Result<HashMap<EntityId, EntityId>, MergeError> {
    let mut owner: HashMap<&EntityId, usize> = HashMap::new();
    let mut map = HashMap::new();
    for (gi, group) in plan.groups.iter().enumerate() {
        if !group.members.contains(&group.canonical) {
            return Err(MergeError::CanonicalNotMember(group.canonical.clone()));
        }
        for m in &group.members {
            if owner.insert(m, gi).is_some() {
                return Err(MergeError::OverlappingGroups(m.clone()));
            }
        }
        // members already merged away are skipped
        let present: Vec<&EntityId> = group
            .non_canonical()
            .filter(|m| graph.contains(m.as_str()))
            .collect();
        if present.is_empty() {
            continue;
        }
        if !graph.contains(group.canonical.as_str()) {
            return Err(MergeError::UnknownCanonical(group.canonical.clone()));
        }
        for m in present {
            map.insert(m.clone(), group.canonical.clone());
        }
    }
    Ok(map)
}

fn check_strategy(plan: &MergePlan, expected: MergeStrategy) -> Result<(), MergeError> {
    if plan.strategy != expected {
        return Err(MergeError::WrongStrategy {
            expected,
            found: plan.strategy,
        });
    }
    Ok(())
}

fn consolidate(
    graph: &KnowledgeGraph,
    plan: &MergePlan,
    summarizer: &dyn Summarizer,
    keep_members: bool,
    stats: &mut MergeStats,
) -> Result<KnowledgeGraph, MergeError> {
    let map = rewrite_map(graph, plan)?;
    stats.groups = plan.groups.iter().filter(|g| g.members.len() > 1).count();
    let mut record = |a: &Aggregated| {
        stats.descriptions_summarized += usize::from(a.summarized);
        stats.summarizer_fallbacks += usize::from(a.fell_back);
    };

    // canonical -> member descriptions in id order
    let mut absorbed: BTreeMap<&EntityId, Vec<(&EntityId, &str)>> = BTreeMap::new();
    for (member, canonical) in &map {
        let e = graph
            .entity(member.as_str())
            .expect("rewrite map only holds present members");
        absorbed
            .entry(canonical)
            .or_default()
            .push((member, &e.description));
    }
    let mut entities = Vec::with_capacity(graph.entity_count());
    for e in graph.entities() {
        if map.contains_key(&e.id) {
            if keep_members {
                entities.push(e.clone());
            } else {
                stats.entities_removed += 1;
            }
            continue;
        }
        let mut e = e.clone();
        if let Some(members) = absorbed.get_mut(&e.id) {
            members.sort();
            let mut texts = vec![e.description.clone()];
            texts.extend(members.iter().map(|(_, d)| d.to_string()));
            let agg = aggregate_description(
                &texts,
                Subject::Entity(&e.name),
                summarizer,
                plan.token_budget,
            );
            record(&agg);
            e.description = agg.text;
        }
        entities.push(e);
    }

    struct Slot {
        triple: Triple,
        descriptions: Vec<String>,
        touched: bool,
    }
    let mut slots: Vec<Slot> = Vec::with_capacity(graph.triple_count());
    let mut by_key: HashMap<TripleKey, usize> = HashMap::new();
    for t in graph.triples() {
        let source = map.get(&t.source).unwrap_or(&t.source);
        let target = map.get(&t.target).unwrap_or(&t.target);
        let touched = source != &t.source || target != &t.target;
        if touched && source == target {
            stats.self_loops_dropped += 1;
            continue;
        }
        let mut triple = t.clone();
        triple.source = source.clone();
        triple.target = target.clone();
        let key = triple.key();
        if let Some(&i) = by_key.get(&key) {
            if touched || slots[i].touched {
                slots[i].touched = true;
                slots[i].descriptions.push(triple.description);
                stats.parallel_triples_collapsed += 1;
                continue;
            }
        } else {
            by_key.insert(key, slots.len());
        }
        slots.push(Slot {
            descriptions: vec![triple.description.clone()],
            triple,
            touched,
        });
    }
    let triples = slots
        .into_iter()
        .map(|mut s| {
            if s.descriptions.len() > 1 {
                let agg = aggregate_description(
                    &s.descriptions,
                    Subject::Relation(&s.triple.relation),
                    summarizer,
                    plan.token_budget,
                );
                record(&agg);
                s.triple.description = agg.text;
            }
            s.triple
        })
        .collect();
    Ok(KnowledgeGraph::from_parts(entities, triples))
}

fn add_synonyms(graph: &mut KnowledgeGraph, plan: &MergePlan, stats: &mut MergeStats) {
    for group in &plan.groups {
        for member in group.non_canonical() {
            graph.add_triple(Triple::new(
                member.clone(),
                plan.synonym_label.clone(),
                group.canonical.clone(),
            ));
            stats.synonym_triples_added += 1;
        }
    }
}

pub fn direct_merge(
    graph: &KnowledgeGraph,
    plan: &MergePlan,
    summarizer: &dyn Summarizer,
) -> Result<MergeOutcome, MergeError> {
    check_strategy(plan, MergeStrategy::DirectMerge)?;
    let mut stats = MergeStats::default();
    let graph = consolidate(graph, plan, summarizer, false, &mut stats)?;
    Ok(MergeOutcome { graph, stats })
}

pub fn synonym_link(graph: &KnowledgeGraph, plan: &MergePlan) -> Result<MergeOutcome, MergeError> {
    check_strategy(plan, MergeStrategy::SynonymLink)?;
    rewrite_map(graph, plan)?;
    if let Some(missing) = plan
        .groups
        .iter()
        .flat_map(|g| g.members.iter())
        .find(|m| !graph.contains(m.as_str()))
    {
        return Err(MergeError::UnknownMember(missing.clone()));
    }
    let mut stats = MergeStats {
        groups: plan.groups.iter().filter(|g| g.members.len() > 1).count(),
        ..Default::default()
    };
    let mut out = graph.clone();
    add_synonyms(&mut out, plan, &mut stats);
    Ok(MergeOutcome { graph: out, stats })
}

pub fn merge_with_link(
    graph: &KnowledgeGraph,
    plan: &MergePlan,
    summarizer: &dyn Summarizer,
) -> Result<MergeOutcome, MergeError> {
    check_strategy(plan, MergeStrategy::MergeWithLink)?;
    if let Some(missing) = plan
        .groups
        .iter()
        .flat_map(|g| g.members.iter())
        .find(|m| !graph.contains(m.as_str()))
    {
        return Err(MergeError::UnknownMember(missing.clone()));
    }
    let mut stats = MergeStats::default();
    let mut out = consolidate(graph, plan, summarizer, true, &mut stats)?;
    add_synonyms(&mut out, plan, &mut stats);
    Ok(MergeOutcome { graph: out, stats })
}

/// Dispatches on `plan.strategy`.
pub fn apply_plan(
    graph: &KnowledgeGraph,
    plan: &MergePlan,
    summarizer: &dyn Summarizer,
) -> Result<MergeOutcome, MergeError> {
    match plan.strategy {
        MergeStrategy::DirectMerge => direct_merge(graph, plan, summarizer),
        MergeStrategy::SynonymLink => synonym_link(graph, plan),
        MergeStrategy::MergeWithLink => merge_with_link(graph, plan, summarizer),
    }
}
