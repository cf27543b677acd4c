//! Generate graphs with planted duplicates and errors, resolve them, and score against ground truth.

use std::collections::BTreeSet;

use kg_denoise::embed::{EmbedInput, MockEmbedder};
use kg_denoise::graph::Triple;
use kg_denoise::merging::Truncate;
use kg_denoise::pipeline::{run_pipeline, Backends, Grouping, PipelineConfig};
use kg_denoise::reflection::MockJudge;
use kg_denoise::synth::{generate_noisy_kg, reflection_metrics, resolution_metrics, NoiseSpec};

fn main() {
    let embedder = MockEmbedder::new(64);
    let backends = Backends {
        embedder: &embedder,
        summarizer: &Truncate,
        judge: &MockJudge,
    };
    for (label, input) in [
        ("name+description", EmbedInput::NameAndDescription),
        ("description", EmbedInput::DescriptionOnly),
    ] {
        let spec = NoiseSpec {
            cluster_size: [2, 3],
            seed: 1,
            ..Default::default()
        };
        let (graph, truth) = generate_noisy_kg(&spec).unwrap();
        let config = PipelineConfig {
            grouping: Grouping::Threshold(0.99),
            embed_input: input,
            ..Default::default()
        };
        let out = run_pipeline(&graph, &config, &backends).unwrap();

        let universe = graph.entity_ids().cloned().collect();
        let er = resolution_metrics(&out.er.groups, &truth, &universe).unwrap();
        let bad_after = truth.bad_triples_after(&out.er.groups);
        let judged = out.verdicts.iter().map(|v| v.key()).collect();
        let removed: BTreeSet<_> = out.removed.iter().map(Triple::key).collect();
        let truth_after = kg_denoise::synth::GroundTruth {
            clusters: vec![],
            bad_triples: bad_after,
        };
        let tr = reflection_metrics(&removed, &truth_after, &judged);
        println!("embedding {label}: resolution {er:?}");
        println!("embedding {label}: reflection {tr:?}");
    }
}
