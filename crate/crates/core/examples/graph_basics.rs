//! Build a small graph, inspect it, and round-trip it through JSON and TSV.

use kg_denoise::graph::{whitespace_tokens, Entity, KnowledgeGraph, Triple};
use kg_denoise::io::{graph_to_string, load_graph, GraphFormat};

fn main() {
    let graph = KnowledgeGraph::from_parts(
        vec![
            Entity::named("Large Language Models")
                .typed("CONCEPT")
                .described("Neural models trained on text."),
            Entity::named("LLM")
                .typed("CONCEPT")
                .described("Short for large language models."),
            Entity::named("Transformer")
                .typed("CONCEPT")
                .described("Attention-based architecture."),
            Entity::named("Lagos").typed("LOCATION"),
        ],
        vec![
            Triple::new("Large Language Models", "built on", "Transformer"),
            Triple::new("LLM", "uses", "Transformer"),
        ],
    );
    assert!(graph.validate().is_empty());

    println!(
        "neighbors of Transformer: {:?}",
        graph.neighbors("Transformer").unwrap()
    );
    println!("components: {:?}", graph.connected_components());
    println!("{:#?}", graph.stats(whitespace_tokens));

    let json = graph_to_string(&graph);
    let back = load_graph(json.as_bytes(), GraphFormat::Json).unwrap();
    println!("JSON round trip equal: {}", back == graph);

    let tsv = "alpha\tknows\tbeta\nbeta\tknows\tgamma\n";
    let from_tsv = load_graph(tsv.as_bytes(), GraphFormat::TsvTriples).unwrap();
    println!(
        "TSV graph: {} entities, {} triples",
        from_tsv.entity_count(),
        from_tsv.triple_count()
    );
}
