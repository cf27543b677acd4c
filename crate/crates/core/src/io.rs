//! Serialization for graphs, reflection logs and reduction reports.
//!
//! Graph JSON layout:
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "entities": [{"id": "...", "name": "...", "type": null, "description": "", "source_chunk": null}],
//!   "triples": [{"source": "...", "relation": "...", "target": "...", "description": "", "source_chunk": null}]
//! }
//! ```
//!
//! The TSV triple format is one `source<TAB>relation<TAB>target` per line;
//! entity ids and names are both taken from the surface strings.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::FormatError;
use crate::graph::{Entity, EntityId, GraphStats, KnowledgeGraph, Triple};
use crate::reflection::ReflectionVerdict;
use crate::util::round2;

pub const FORMAT_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    Json,
    TsvTriples,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphDocument {
    pub format_version: String,
    pub entities: Vec<EntityRecord>,
    pub triples: Vec<TripleRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub name: String,
    #[serde(rename = "type", default)]
    pub entity_type: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub source_chunk: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TripleRecord {
    pub source: String,
    pub relation: String,
    pub target: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub source_chunk: Option<String>,
}

impl GraphDocument {
    /// Canonical document: entities sorted by id, triples by (source, relation, target).
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let canonical = graph.canonicalized();
        let entities = canonical
            .entities()
            .iter()
            .map(|e| EntityRecord {
                id: e.id.to_string(),
                name: e.name.clone(),
                entity_type: e.entity_type.clone(),
                description: e.description.clone(),
                source_chunk: e.source_chunk.clone(),
            })
            .collect();
        let triples = canonical
            .triples()
            .iter()
            .map(|t| TripleRecord {
                source: t.source.to_string(),
                relation: t.relation.clone(),
                target: t.target.to_string(),
                description: t.description.clone(),
                source_chunk: t.source_chunk.clone(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION.to_owned(),
            entities,
            triples,
        }
    }

    pub fn into_graph(self) -> KnowledgeGraph {
        let entities = self
            .entities
            .into_iter()
            .map(|r| Entity {
                id: EntityId::new(r.id),
                name: r.name,
                entity_type: r.entity_type,
                description: r.description,
                source_chunk: r.source_chunk,
            })
            .collect();
        let triples = self
            .triples
            .into_iter()
            .map(|r| Triple {
                source: EntityId::new(r.source),
                relation: r.relation,
                target: EntityId::new(r.target),
                description: r.description,
                source_chunk: r.source_chunk,
            })
            .collect();
        KnowledgeGraph::from_parts(entities, triples)
    }
}

pub fn load_graph(reader: impl Read, format: GraphFormat) -> Result<KnowledgeGraph, FormatError> {
    let graph = match format {
        GraphFormat::Json => {
            let doc: GraphDocument =
                serde_json::from_reader(reader).map_err(|e| FormatError::Parse {
                    line: e.line(),
                    message: format!("column {}: {e}", e.column()),
                })?;
            doc.into_graph()
        }
        GraphFormat::TsvTriples => load_tsv(reader)?,
    };
    let violations = graph.validate();
    if violations.is_empty() {
        Ok(graph)
    } else {
        Err(FormatError::Invalid(violations))
    }
}

fn load_tsv(reader: impl Read) -> Result<KnowledgeGraph, FormatError> {
    let mut graph = KnowledgeGraph::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(FormatError::Parse {
                line: i + 1,
                message: format!(
                    "expected 3 non-empty tab-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        for name in [fields[0], fields[2]] {
            if !graph.contains(name) {
                graph.add_entity(Entity::named(name));
            }
        }
        graph.add_triple(Triple::new(fields[0], fields[1], fields[2]));
    }
    Ok(graph)
}

pub fn save_graph(graph: &KnowledgeGraph, mut writer: impl Write) -> Result<(), FormatError> {
    let doc = GraphDocument::from_graph(graph);
    serde_json::to_writer_pretty(&mut writer, &doc).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn graph_to_string(graph: &KnowledgeGraph) -> String {
    let mut buf = Vec::new();
    save_graph(graph, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Serialize, Deserialize)]
struct LogRecord {
    source: String,
    relation: String,
    target: String,
    score: f64,
    analysis: String,
}

/// One JSON object per verdict, scores rounded to two decimals.
pub fn write_reflection_log<'a>(
    verdicts: impl IntoIterator<Item = &'a ReflectionVerdict>,
    mut writer: impl Write,
) -> Result<(), FormatError> {
    for v in verdicts {
        let record = LogRecord {
            source: v.source.to_string(),
            relation: v.relation.clone(),
            target: v.target.to_string(),
            score: round2(v.score),
            analysis: v.analysis.clone(),
        };
        serde_json::to_writer(&mut writer, &record).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_reflection_log(reader: impl Read) -> Result<Vec<ReflectionVerdict>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: LogRecord = serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ReflectionVerdict {
            source: EntityId::new(r.source),
            relation: r.relation,
            target: EntityId::new(r.target),
            score: r.score,
            analysis: r.analysis,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub entities_before: usize,
    pub entities_after: usize,
    pub triples_before: usize,
    pub triples_after: usize,
}

impl StageCounts {
    pub fn between(before: &KnowledgeGraph, after: &KnowledgeGraph) -> Self {
        Self {
            entities_before: before.entity_count(),
            entities_after: after.entity_count(),
            triples_before: before.triple_count(),
            triples_after: after.triple_count(),
        }
    }
}

fn two_decimals<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{value:.2}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub entities_before: usize,
    pub entities_after: usize,
    #[serde(serialize_with = "two_decimals")]
    pub entity_reduction_pct: f64,
    pub triples_before: usize,
    pub triples_after: usize,
    #[serde(serialize_with = "two_decimals")]
    pub triple_reduction_pct: f64,
    pub per_stage: BTreeMap<String, StageCounts>,
}

/// `(before - after) / before * 100` rounded to two decimals, 0 when `before` is 0.
pub fn reduction_pct(before: usize, after: usize) -> f64 {
    if before == 0 {
        return 0.0;
    }
    round2((before as f64 - after as f64) / before as f64 * 100.0)
}

impl ReductionReport {
    /// Fails when either count grew.
    pub fn new(
        entities: (usize, usize),
        triples: (usize, usize),
        per_stage: BTreeMap<String, StageCounts>,
    ) -> Result<Self, FormatError> {
        if entities.1 > entities.0 || triples.1 > triples.0 {
            return Err(FormatError::Precondition(format!(
                "counts grew: entities {} -> {}, triples {} -> {}",
                entities.0, entities.1, triples.0, triples.1
            )));
        }
        Ok(Self::allowing_growth(entities, triples, per_stage))
    }

    /// Like [`new`](Self::new) but reports growth as a negative percentage.
    /// Synonym linking adds triples, so pipeline reports go through here.
    pub fn allowing_growth(
        entities: (usize, usize),
        triples: (usize, usize),
        per_stage: BTreeMap<String, StageCounts>,
    ) -> Self {
        Self {
            entities_before: entities.0,
            entities_after: entities.1,
            entity_reduction_pct: reduction_pct(entities.0, entities.1),
            triples_before: triples.0,
            triples_after: triples.1,
            triple_reduction_pct: reduction_pct(triples.0, triples.1),
            per_stage,
        }
    }
}

pub fn write_reduction_report(
    before: &GraphStats,
    after: &GraphStats,
    stages: &BTreeMap<String, StageCounts>,
    mut writer: impl Write,
) -> Result<ReductionReport, FormatError> {
    let report = ReductionReport::new(
        (before.entity_count, after.entity_count),
        (before.triple_count, after.triple_count),
        stages.clone(),
    )?;
    write_json(&report, &mut writer)?;
    Ok(report)
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(value: &T, mut writer: impl Write) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// One compact JSON object per line.
pub fn write_jsonl<'a, T: Serialize + 'a>(
    records: impl IntoIterator<Item = &'a T>,
    mut writer: impl Write,
) -> Result<(), FormatError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(
    reader: impl Read,
) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{whitespace_tokens, Violation};

    #[test]
    fn loads_json_document() {
        let doc = r#"{"format_version":"1",
            "entities":[{"id":"a","name":"A","type":"ORG","description":"x","source_chunk":null},
                        {"id":"b","name":"B"}],
            "triples":[{"source":"a","relation":"owns","target":"b","description":"","source_chunk":"c1"}]}"#;
        let g = load_graph(doc.as_bytes(), GraphFormat::Json).unwrap();
        assert_eq!((g.entity_count(), g.triple_count()), (2, 1));
        assert_eq!(g.entity("a").unwrap().entity_type.as_deref(), Some("ORG"));
    }

    #[test]
    fn loads_tsv_line() {
        let g = load_graph("LLMs\trun on\tGPU\n".as_bytes(), GraphFormat::TsvTriples).unwrap();
        assert_eq!((g.entity_count(), g.triple_count()), (2, 1));
        assert!(g.entities().iter().all(|e| e.description.is_empty()));
        assert_eq!(g.triples()[0].relation, "run on");
    }

    #[test]
    fn tsv_parse_error_names_line() {
        let err =
            load_graph("a\tr\tb\nbroken line\n".as_bytes(), GraphFormat::TsvTriples).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn undeclared_entity_fails_load() {
        let doc = r#"{"format_version":"1","entities":[{"id":"a","name":"A"}],
            "triples":[{"source":"a","relation":"r","target":"ghost"}]}"#;
        let err = load_graph(doc.as_bytes(), GraphFormat::Json).unwrap_err();
        match &err {
            FormatError::Invalid(v) => assert!(
                matches!(&v[0], Violation::DanglingEndpoint { missing, .. } if missing.as_str() == "ghost")
            ),
            other => panic!("unexpected {other}"),
        }
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = load_graph(
            "{\n\"format_version\": \"1\",\n oops".as_bytes(),
            GraphFormat::Json,
        )
        .unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_graph_document() {
        let s = graph_to_string(&KnowledgeGraph::new());
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["format_version"], "1");
        assert_eq!(v["entities"].as_array().unwrap().len(), 0);
        assert_eq!(v["triples"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn save_sorts_entities_and_triples() {
        let g = KnowledgeGraph::from_parts(
            vec![Entity::named("b"), Entity::named("a")],
            vec![Triple::new("b", "r", "a"), Triple::new("a", "r", "b")],
        );
        let doc = GraphDocument::from_graph(&g);
        assert_eq!(doc.entities[0].id, "a");
        assert_eq!(doc.triples[0].source, "a");
        assert_eq!(graph_to_string(&g), graph_to_string(&g.canonicalized()));
    }

    fn verdict(score: f64, analysis: &str) -> ReflectionVerdict {
        ReflectionVerdict {
            source: "Turtle".into(),
            relation: "classified as a borrower".into(),
            target: "Borrowers".into(),
            score,
            analysis: analysis.into(),
        }
    }

    #[test]
    fn reflection_log_lines() {
        let mut buf = Vec::new();
        write_reflection_log(
            &[verdict(
                0.10,
                "Turtles are not entities that engage in borrowing",
            )],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"score\":0.1"), "{text}");

        let mut buf = Vec::new();
        write_reflection_log(&[], &mut buf).unwrap();
        assert!(buf.is_empty());

        let mut buf = Vec::new();
        write_reflection_log(&[verdict(0.5, "line one\nline two")], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = read_reflection_log(text.as_bytes()).unwrap();
        assert_eq!(back[0].analysis, "line one\nline two");
    }

    #[test]
    fn reflection_log_accepts_two_decimal_form() {
        let line = r#"{"source":"a","relation":"r","target":"b","score":0.10,"analysis":""}"#;
        let back = read_reflection_log(line.as_bytes()).unwrap();
        assert_eq!(back[0].score, 0.1);
    }

    fn stats(entities: usize, triples: usize) -> GraphStats {
        let mut s = KnowledgeGraph::new().stats(whitespace_tokens);
        s.entity_count = entities;
        s.triple_count = triples;
        s
    }

    #[test]
    fn reduction_report_two_decimals() {
        let mut buf = Vec::new();
        let report = write_reduction_report(
            &stats(21131, 23102),
            &stats(12679, 15548),
            &BTreeMap::new(),
            &mut buf,
        )
        .unwrap();
        assert_eq!(report.entity_reduction_pct, 40.00);
        assert_eq!(report.triple_reduction_pct, 32.70);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"entity_reduction_pct\": 40.00"), "{text}");
        assert!(text.contains("\"triple_reduction_pct\": 32.70"), "{text}");
        let parsed: ReductionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn reduction_report_edges() {
        let r = write_reduction_report(&stats(5, 5), &stats(5, 5), &BTreeMap::new(), Vec::new())
            .unwrap();
        assert_eq!((r.entity_reduction_pct, r.triple_reduction_pct), (0.0, 0.0));
        let r = write_reduction_report(&stats(0, 0), &stats(0, 0), &BTreeMap::new(), Vec::new())
            .unwrap();
        assert_eq!(r.entity_reduction_pct, 0.0);
        assert!(
            write_reduction_report(&stats(5, 5), &stats(6, 5), &BTreeMap::new(), Vec::new())
                .is_err()
        );
    }
}
