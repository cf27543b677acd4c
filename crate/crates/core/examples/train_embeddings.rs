//! Train TransE, DistMult and ComplEx on a synthetic graph and print loss curves.

use kg_denoise::embed::{train_with_log, KgeModel, TrainConfig};
use kg_denoise::synth::{generate_noisy_kg, NoiseSpec};

fn main() {
    let (graph, _) = generate_noisy_kg(&NoiseSpec {
        base_entities: 60,
        duplicate_clusters: 6,
        ..Default::default()
    })
    .expect("valid spec");
    let config = TrainConfig {
        dimension: 16,
        epochs: 50,
        seed: 7,
        ..Default::default()
    };
    for model in [KgeModel::TransE, KgeModel::DistMult, KgeModel::ComplEx] {
        let (table, log) = train_with_log(&graph, model, &config).expect("training converges");
        let losses = &log.epoch_losses;
        println!(
            "{model:?}: {} entity vectors of length {}, loss {:.4} -> {:.4}",
            table.len(),
            table.vector_len(),
            losses[0],
            losses[losses.len() - 1]
        );
    }
}
