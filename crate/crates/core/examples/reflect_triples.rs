//! Filter triples with the offline marker judge, then with an LLM judge behind a scripted transport.

use std::sync::Arc;

use kg_denoise::graph::{Entity, KnowledgeGraph, Triple};
use kg_denoise::llm::mock::{fast_config, ScriptedTransport};
use kg_denoise::llm::LlmClient;
use kg_denoise::reflection::{reflect_graph, JudgeConfig, LlmJudge, MockJudge, BAD_MARKER};

fn main() {
    let graph = KnowledgeGraph::from_parts(
        vec![
            Entity::named("TURTLE"),
            Entity::named("BORROWERS"),
            Entity::named("BANK"),
        ],
        vec![
            Triple::new("TURTLE", format!("classified as {BAD_MARKER}"), "BORROWERS")
                .described("The turtle is classified as a borrower."),
            Triple::new("BORROWERS", "owe money to", "BANK")
                .described("Borrowers repay loans to the bank."),
        ],
    );
    let config = JudgeConfig::default();

    let mut log = Vec::new();
    let out = reflect_graph(&graph, &MockJudge, &config, 4, Some(&mut log)).unwrap();
    println!(
        "mock judge removed {:?}",
        out.removed.iter().map(Triple::key).collect::<Vec<_>>()
    );
    print!("{}", String::from_utf8(log).unwrap());

    let transport = ScriptedTransport::chat(&[
        r#"{"analysis": "Turtles are not entities that engage in borrowing.", "score": 0.1}"#,
        r#"{"analysis": "Borrowers owe banks; accurate and specific.", "score": 0.95}"#,
    ]);
    let client = LlmClient::with_transport(fast_config(), Arc::new(transport)).unwrap();
    let judge = LlmJudge::new(&client, config.max_retries);
    let out = reflect_graph(&graph, &judge, &config, 1, None).unwrap();
    for v in &out.verdicts {
        println!(
            "{} -[{}]-> {}: {:.2} ({})",
            v.source, v.relation, v.target, v.score, v.analysis
        );
    }
    println!(
        "kept {} of {} triples",
        out.graph.triple_count(),
        graph.triple_count()
    );
}
