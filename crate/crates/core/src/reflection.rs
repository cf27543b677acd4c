//! Triple reflection: a judge scores each triple in [0, 1] and triples scoring
//! below δ_TR are dropped. Synonym edges added by merging are never judged.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{JudgeError, ReflectionError};
use crate::graph::{Entity, EntityId, KnowledgeGraph, Triple, TripleKey};
use crate::io::write_reflection_log;
use crate::llm::{fan_out, ChatMessage, LlmClient};
use crate::merging::DEFAULT_SYNONYM_LABEL;
use crate::util::round2;

pub const DEFAULT_THRESHOLD: f64 = 0.2;
/// Relation text carrying this marker is scored low by [`MockJudge`].
pub const BAD_MARKER: &str = "⟦bad⟧";

pub const JUDGE_SYSTEM_PROMPT: &str =
    "You are a knowledge graph expert who evaluates whether the knowledge graph triplet belongs to commonsense knowledge.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionVerdict {
    pub source: EntityId,
    pub relation: String,
    pub target: EntityId,
    pub score: f64,
    pub analysis: String,
}

impl ReflectionVerdict {
    pub fn key(&self) -> TripleKey {
        TripleKey {
            source: self.source.clone(),
            relation: self.relation.clone(),
            target: self.target.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeBackend {
    Llm,
    #[default]
    Mock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub threshold: f64,
    pub max_retries: u32,
    pub backend: JudgeBackend,
    /// Triples with this relation label are exempt from judging and filtering.
    pub exempt_label: String,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_retries: 2,
            backend: JudgeBackend::default(),
            exempt_label: DEFAULT_SYNONYM_LABEL.to_owned(),
        }
    }
}

/// A verdict plus anything worth surfacing about how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Judgement {
    pub verdict: ReflectionVerdict,
    pub warning: Option<String>,
}

pub trait Judge: Sync {
    fn judge(
        &self,
        triple: &Triple,
        source: &Entity,
        target: &Entity,
    ) -> Result<Judgement, JudgeError>;
}

/// Scores 0.1 when the relation label or description contains [`BAD_MARKER`], 1.0 otherwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockJudge;

impl Judge for MockJudge {
    fn judge(&self, triple: &Triple, _: &Entity, _: &Entity) -> Result<Judgement, JudgeError> {
        let bad = triple.relation.contains(BAD_MARKER) || triple.description.contains(BAD_MARKER);
        let (score, analysis) = if bad {
            (0.1, "marked as erroneous")
        } else {
            (1.0, "no marker")
        };
        Ok(Judgement {
            verdict: verdict(triple, score, analysis.to_owned()),
            warning: None,
        })
    }
}

fn verdict(triple: &Triple, score: f64, analysis: String) -> ReflectionVerdict {
    ReflectionVerdict {
        source: triple.source.clone(),
        relation: triple.relation.clone(),
        target: triple.target.clone(),
        score,
        analysis,
    }
}

pub struct LlmJudge<'a> {
    client: &'a LlmClient,
    max_retries: u32,
}

impl<'a> LlmJudge<'a> {
    pub fn new(client: &'a LlmClient, max_retries: u32) -> Self {
        Self {
            client,
            max_retries,
        }
    }

    /// The relationship slot holds the triple description, or its label when that is empty.
    pub fn user_prompt(source: &str, destination: &str, relationship: &str) -> String {
        format!(
            "Evaluate the reasonableness of the knowledge graph triplet with precision:\n\
             Source: {source}\n\
             Destination: {destination}\n\
             Relationship: {relationship}\n\
             \n\
             Analysis requirements\n\
             - Semantic accuracy: Does the relationship accurately describe the connection? Consider domain knowledge and factual correctness.\n\
             - Relevance: Is the connection meaningful and significant, not trivial or coincidental?\n\
             - Specificity: Is the relationship clear and specific rather than vague or overly general?\n\
             - Logical coherence: Does the triple follow expected semantic and syntactic patterns for KGs?\n\
             - Entity type compatibility: Is the relationship sensible given the entity types involved?\n\
             \n\
             Scoring guidelines\n\
             - 0.0–0.3: Invalid or highly questionable (factually wrong, illogical, meaningless)\n\
             - 0.4–0.6: Partially valid but problematic (some relevance yet vague/imprecise/minor inaccuracies)\n\
             - 0.7–0.8: Mostly valid (accurate but could be more specific or informative)\n\
             - 0.9–1.0: Fully valid (accurate, specific, informative, and logically sound)\n\
             \n\
             Optimization notes\n\
             - Focus on direct evaluation without unnecessary elaboration.\n\
             - Use domain-specific reasoning where applicable.\n\
             \n\
             Output format (return a valid JSON object):\n\
             {{\n    \"analysis\": \"concise analysis\",\n    \"score\": 0.5\n}}\n\
             The score should be a float between 0.0–1.0 with two-decimal precision."
        )
    }
}

impl Judge for LlmJudge<'_> {
    fn judge(
        &self,
        triple: &Triple,
        source: &Entity,
        target: &Entity,
    ) -> Result<Judgement, JudgeError> {
        let relationship = if triple.description.trim().is_empty() {
            &triple.relation
        } else {
            &triple.description
        };
        let messages = [
            ChatMessage::system(JUDGE_SYSTEM_PROMPT),
            ChatMessage::user(Self::user_prompt(&source.name, &target.name, relationship)),
        ];
        let mut attempts = 0;
        loop {
            attempts += 1;
            let raw = self.client.chat_complete(&messages)?;
            match parse_judge_reply(&raw) {
                Some((score, analysis)) => {
                    let (score, warning) = clamp_score(score);
                    if let Some(w) = &warning {
                        log::warn!("{}: {w}", triple.key());
                    }
                    return Ok(Judgement {
                        verdict: verdict(triple, round2(score), analysis),
                        warning,
                    });
                }
                None if attempts > self.max_retries => {
                    return Err(JudgeError::Malformed { attempts, raw })
                }
                None => log::debug!("malformed judge reply for {}, retrying", triple.key()),
            }
        }
    }
}

fn clamp_score(score: f64) -> (f64, Option<String>) {
    if (0.0..=1.0).contains(&score) {
        (score, None)
    } else {
        let clamped = score.clamp(0.0, 1.0);
        (
            clamped,
            Some(format!(
                "score {score} outside [0, 1], clamped to {clamped}"
            )),
        )
    }
}

/// Extracts `(score, analysis)` from the first JSON object in `raw`.
/// The score may be a number or a numeric string.
pub fn parse_judge_reply(raw: &str) -> Option<(f64, String)> {
    let mut rest = raw;
    while let Some(start) = rest.find('{') {
        let mut stream = serde_json::Deserializer::from_str(&rest[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            let score = match obj.get("score")? {
                Value::Number(n) => n.as_f64()?,
                Value::String(s) => s.trim().parse().ok()?,
                _ => return None,
            };
            if !score.is_finite() {
                return None;
            }
            let analysis = obj
                .get("analysis")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_owned();
            return Some((score, analysis));
        }
        rest = &rest[start + 1..];
    }
    None
}

/// Keeps triples scoring at least `threshold` plus every triple labelled
/// `exempt_label`. Returns the filtered graph and the removed triples in input order.
pub fn filter_triples(
    graph: &KnowledgeGraph,
    scores: &HashMap<TripleKey, f64>,
    threshold: f64,
    exempt_label: &str,
) -> Result<(KnowledgeGraph, Vec<Triple>), ReflectionError> {
    let per_triple = graph
        .triples()
        .iter()
        .map(|t| {
            if t.relation == exempt_label {
                return Ok(None);
            }
            let key = t.key();
            scores
                .get(&key)
                .copied()
                .map(Some)
                .ok_or(ReflectionError::MissingVerdict(key))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(split(graph, &per_triple, threshold))
}

fn split(
    graph: &KnowledgeGraph,
    scores: &[Option<f64>],
    threshold: f64,
) -> (KnowledgeGraph, Vec<Triple>) {
    let mut kept = Vec::with_capacity(graph.triple_count());
    let mut removed = Vec::new();
    for (t, score) in graph.triples().iter().zip(scores) {
        match score {
            Some(s) if *s < threshold => removed.push(t.clone()),
            _ => kept.push(t.clone()),
        }
    }
    (
        KnowledgeGraph::from_parts(graph.entities().to_vec(), kept),
        removed,
    )
}

#[derive(Clone, Debug)]
pub struct ReflectionOutcome {
    pub graph: KnowledgeGraph,
    /// One verdict per judged triple, in graph order.
    pub verdicts: Vec<ReflectionVerdict>,
    pub removed: Vec<Triple>,
    pub warnings: Vec<String>,
}

/// Judges every non-exempt triple with at most `max_in_flight` concurrent
/// calls, writes the verdict log when `log` is given, then filters.
pub fn reflect_graph(
    graph: &KnowledgeGraph,
    judge: &dyn Judge,
    config: &JudgeConfig,
    max_in_flight: usize,
    log: Option<&mut dyn Write>,
) -> Result<ReflectionOutcome, ReflectionError> {
    let mut jobs = Vec::new();
    for (i, t) in graph.triples().iter().enumerate() {
        if t.relation == config.exempt_label {
            continue;
        }
        let source = graph
            .entity(t.source.as_str())
            .ok_or_else(|| ReflectionError::MissingEntity(t.source.clone()))?;
        let target = graph
            .entity(t.target.as_str())
            .ok_or_else(|| ReflectionError::MissingEntity(t.target.clone()))?;
        jobs.push((i, t, source, target));
    }
    let results = fan_out(&jobs, max_in_flight, |(_, t, s, d)| judge.judge(t, s, d));

    let mut scores = vec![None; graph.triple_count()];
    let mut verdicts = Vec::with_capacity(jobs.len());
    let mut warnings = Vec::new();
    let mut failures = Vec::new();
    for ((i, t, _, _), result) in jobs.iter().zip(results) {
        match result {
            Ok(j) => {
                scores[*i] = Some(j.verdict.score);
                warnings.extend(j.warning.map(|w| format!("{}: {w}", t.key())));
                verdicts.push(j.verdict);
            }
            Err(e) => failures.push((t.key(), e)),
        }
    }
    if !failures.is_empty() {
        return Err(ReflectionError::Judge { failures });
    }
    if let Some(w) = log {
        write_reflection_log(&verdicts, w)?;
    }
    let (graph, removed) = split(graph, &scores, config.threshold);
    Ok(ReflectionOutcome {
        graph,
        verdicts,
        removed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::{fast_config, ScriptedTransport};
    use std::sync::Arc;

    fn client(replies: &[&str]) -> LlmClient {
        LlmClient::with_transport(fast_config(), Arc::new(ScriptedTransport::chat(replies)))
            .unwrap()
    }

    fn three_triples() -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            vec![Entity::named("a"), Entity::named("b"), Entity::named("c")],
            vec![
                Triple::new("a", "knows", "b"),
                Triple::new("b", format!("eats {BAD_MARKER}"), "c"),
                Triple::new("a", "likes", "c"),
            ],
        )
    }

    #[test]
    fn parses_replies() {
        assert_eq!(
            parse_judge_reply(r#"{"analysis": "fine", "score": 0.85}"#),
            Some((0.85, "fine".into()))
        );
        assert_eq!(
            parse_judge_reply("Sure!\n```json\n{\"score\": \"0.3\"}\n```"),
            Some((0.3, String::new()))
        );
        assert_eq!(
            parse_judge_reply("{ broken { \"score\": 1 }"),
            Some((1.0, String::new()))
        );
        assert_eq!(parse_judge_reply("no json here"), None);
        assert_eq!(parse_judge_reply(r#"{"analysis": "x"}"#), None);
    }

    #[test]
    fn llm_judge_case_study() {
        let c = client(&[
            r#"{"analysis": "Turtles are not entities that engage in borrowing.", "score": 0.1}"#,
        ]);
        let t = Triple::new("TURTLE", "classified as", "BORROWERS")
            .described("classified as a borrower");
        let j = LlmJudge::new(&c, 2)
            .judge(&t, &Entity::named("TURTLE"), &Entity::named("BORROWERS"))
            .unwrap();
        assert_eq!(j.verdict.score, 0.1);
        assert!(j.verdict.analysis.contains("borrowing"));
        assert!(j.warning.is_none());
    }

    #[test]
    fn out_of_range_is_clamped() {
        let c = client(&[r#"{"analysis": "x", "score": 1.7}"#]);
        let t = Triple::new("a", "r", "b");
        let j = LlmJudge::new(&c, 0)
            .judge(&t, &Entity::named("a"), &Entity::named("b"))
            .unwrap();
        assert_eq!(j.verdict.score, 1.0);
        assert!(j.warning.is_some());
    }

    #[test]
    fn malformed_replies_retry_then_fail() {
        let c = client(&["nope", r#"{"score": 0.6}"#]);
        let t = Triple::new("a", "r", "b");
        let (a, b) = (Entity::named("a"), Entity::named("b"));
        assert_eq!(
            LlmJudge::new(&c, 1)
                .judge(&t, &a, &b)
                .unwrap()
                .verdict
                .score,
            0.6
        );

        let c = client(&["nope"]);
        match LlmJudge::new(&c, 2).judge(&t, &a, &b) {
            Err(JudgeError::Malformed { attempts, raw }) => {
                assert_eq!(attempts, 3);
                assert_eq!(raw, "nope");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prompt_fills_slots() {
        let p = LlmJudge::user_prompt("TURTLE", "BORROWERS", "classified as a borrower");
        assert!(p.starts_with("Evaluate the reasonableness of the knowledge graph triplet with precision:\nSource: TURTLE\nDestination: BORROWERS\nRelationship: classified as a borrower\n"));
        assert!(
            p.ends_with("The score should be a float between 0.0–1.0 with two-decimal precision.")
        );
    }

    #[test]
    fn mock_judge_marks() {
        let g = three_triples();
        let (a, b) = (Entity::named("a"), Entity::named("b"));
        assert_eq!(
            MockJudge
                .judge(&g.triples()[0], &a, &b)
                .unwrap()
                .verdict
                .score,
            1.0
        );
        assert_eq!(
            MockJudge
                .judge(&g.triples()[1], &a, &b)
                .unwrap()
                .verdict
                .score,
            0.1
        );
    }

    #[test]
    fn filter_boundaries() {
        let g = three_triples();
        let scores: HashMap<TripleKey, f64> = g
            .triples()
            .iter()
            .zip([0.2, 0.1, 0.9])
            .map(|(t, s)| (t.key(), s))
            .collect();
        let (out, removed) = filter_triples(&g, &scores, 0.2, "synonym_of").unwrap();
        assert_eq!(out.triple_count(), 2);
        assert_eq!(removed, vec![g.triples()[1].clone()]);
        assert_eq!(out.entity_count(), 3);

        let (out, removed) = filter_triples(&g, &scores, 0.0, "synonym_of").unwrap();
        assert_eq!(out.triple_count(), 3);
        assert!(removed.is_empty());
    }

    #[test]
    fn filter_needs_verdicts_except_synonyms() {
        let mut g = three_triples();
        g.add_triple(Triple::new("a", "synonym_of", "b"));
        let mut scores: HashMap<TripleKey, f64> =
            g.triples()[..3].iter().map(|t| (t.key(), 0.0)).collect();
        let (out, _) = filter_triples(&g, &scores, 0.5, "synonym_of").unwrap();
        assert_eq!(out.triple_count(), 1);
        scores.remove(&g.triples()[0].key());
        assert!(matches!(
            filter_triples(&g, &scores, 0.5, "synonym_of"),
            Err(ReflectionError::MissingVerdict(_))
        ));
    }

    #[test]
    fn reflect_with_mock() {
        let g = three_triples();
        let mut log = Vec::new();
        let out =
            reflect_graph(&g, &MockJudge, &JudgeConfig::default(), 4, Some(&mut log)).unwrap();
        assert_eq!(out.graph.triple_count(), 2);
        assert_eq!(out.removed.len(), 1);
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 3);

        let empty = KnowledgeGraph::default();
        let mut log = Vec::new();
        let out = reflect_graph(
            &empty,
            &MockJudge,
            &JudgeConfig::default(),
            4,
            Some(&mut log),
        )
        .unwrap();
        assert_eq!(out.graph.triple_count(), 0);
        assert!(log.is_empty());
    }

    #[test]
    fn judge_failures_are_aggregated() {
        let c = client(&["garbage"]);
        let judge = LlmJudge::new(&c, 0);
        match reflect_graph(&three_triples(), &judge, &JudgeConfig::default(), 2, None) {
            Err(ReflectionError::Judge { failures }) => assert_eq!(failures.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
