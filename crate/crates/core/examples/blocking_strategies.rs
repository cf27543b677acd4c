//! Compare semantic, type and structural blocking on the same graph.

use kg_denoise::blocking::{
    build_blocks, semantic_cluster_count, BlockingStrategy, DEFAULT_MAX_BLOCK_SIZE,
};
use kg_denoise::embed::{embed_descriptions, EmbedInput, MockEmbedder};
use kg_denoise::matching::candidate_pairs;
use kg_denoise::synth::{generate_noisy_kg, NoiseSpec};

fn main() {
    let (graph, _) = generate_noisy_kg(&NoiseSpec {
        base_entities: 250,
        duplicate_clusters: 40,
        ..Default::default()
    })
    .expect("valid spec");
    let table = embed_descriptions(
        graph.entities(),
        &MockEmbedder::new(32),
        EmbedInput::default(),
    )
    .unwrap();
    println!(
        "k-means clusters for {} entities: {}",
        graph.entity_count(),
        semantic_cluster_count(graph.entity_count())
    );

    for strategy in [
        BlockingStrategy::Semantic,
        BlockingStrategy::Type,
        BlockingStrategy::Structural,
    ] {
        let blocks = build_blocks(strategy, &graph, &table, DEFAULT_MAX_BLOCK_SIZE, 0).unwrap();
        let largest = blocks.iter().map(|b| b.members.len()).max().unwrap_or(0);
        println!(
            "{strategy:?}: {} blocks, largest {largest}, {} candidate pairs",
            blocks.len(),
            candidate_pairs(&blocks).len()
        );
    }
}
