//! Score candidate pairs under every similarity mode, then group by threshold and by target ratio.

use kg_denoise::blocking::semantic_blocks;
use kg_denoise::embed::{embed_descriptions, EmbedInput, MockEmbedder};
use kg_denoise::matching::{
    candidate_pairs, group_by_target_ratio, group_by_threshold, CanonicalChoice, CanonicalPolicy,
    SimilarityContext, SimilarityMode,
};
use kg_denoise::synth::{generate_noisy_kg, NoiseSpec};

fn main() {
    let (graph, truth) = generate_noisy_kg(&NoiseSpec::default()).expect("valid spec");
    let table = embed_descriptions(
        graph.entities(),
        &MockEmbedder::new(64),
        EmbedInput::DescriptionOnly,
    )
    .unwrap();
    let blocks = semantic_blocks(&graph, &table, 0).unwrap();
    let pairs: Vec<_> = candidate_pairs(&blocks).into_iter().collect();

    for mode in SimilarityMode::ALL {
        let scored = SimilarityContext::new(&graph, &table, mode)
            .score_pairs(&pairs)
            .unwrap();
        let best = scored.iter().map(|p| p.similarity).fold(f64::MIN, f64::max);
        println!(
            "{mode:?}: {} pairs, best similarity {best:.3}",
            scored.len()
        );
    }

    let scored = SimilarityContext::new(&graph, &table, SimilarityMode::Ego)
        .score_pairs(&pairs)
        .unwrap();
    let canon = CanonicalChoice {
        policy: CanonicalPolicy::MinId,
        seed: 0,
    };
    let groups = group_by_threshold(&scored, 0.99, canon);
    println!(
        "threshold 0.99: {} groups (planted {})",
        groups.len(),
        truth.clusters.len()
    );
    if let Some(g) = groups.first() {
        println!("  e.g. {:?} -> {}", g.members, g.canonical);
    }

    let ratio = group_by_target_ratio(&scored, graph.entity_count(), 0.4, canon).unwrap();
    println!(
        "target ratio 0.4: {} merges of {} targeted in {} groups",
        ratio.merges,
        ratio.target_merges,
        ratio.groups.len()
    );
}
