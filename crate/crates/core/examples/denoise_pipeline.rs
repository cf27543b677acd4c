//! Run the full denoising pass with offline backends and print the reduction report.

use kg_denoise::embed::MockEmbedder;
use kg_denoise::io::write_json;
use kg_denoise::merging::Truncate;
use kg_denoise::pipeline::{run_pipeline, Backends, PipelineConfig};
use kg_denoise::reflection::MockJudge;
use kg_denoise::synth::{generate_noisy_kg, NoiseSpec};

fn main() {
    let (graph, _) = generate_noisy_kg(&NoiseSpec {
        base_entities: 200,
        duplicate_clusters: 50,
        ..Default::default()
    })
    .expect("valid spec");
    let config =
        PipelineConfig::from_json(r#"{"grouping": {"target_ratio": 0.4}, "seed": 3}"#).unwrap();
    let embedder = MockEmbedder::new(64);
    let backends = Backends {
        embedder: &embedder,
        summarizer: &Truncate,
        judge: &MockJudge,
    };

    let out = run_pipeline(&graph, &config, &backends).unwrap();
    println!(
        "{} blocks, {} candidate pairs, {} groups, {} merges",
        out.er.blocks,
        out.er.candidate_pairs,
        out.er.groups.len(),
        out.er.merges
    );
    write_json(&out.report, std::io::stdout()).unwrap();
}
