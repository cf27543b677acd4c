//! Apply the same match group with each merge strategy.

use kg_denoise::graph::{Entity, KnowledgeGraph, Triple};
use kg_denoise::io::graph_to_string;
use kg_denoise::matching::MatchGroup;
use kg_denoise::merging::{apply_plan, MergePlan, MergeStrategy, Truncate};

fn main() {
    let graph = KnowledgeGraph::from_parts(
        vec![
            Entity::named("Large Language Models").described("Neural models trained on text."),
            Entity::named("large language models").described("Models that generate text."),
            Entity::named("Transformer"),
        ],
        vec![
            Triple::new("Large Language Models", "built on", "Transformer")
                .described("uses attention"),
            Triple::new("large language models", "built on", "Transformer")
                .described("stacked layers"),
            Triple::new("large language models", "same as", "Large Language Models"),
        ],
    );
    let group = MatchGroup {
        members: ["Large Language Models", "large language models"]
            .into_iter()
            .map(Into::into)
            .collect(),
        canonical: "Large Language Models".into(),
    };

    for strategy in [
        MergeStrategy::DirectMerge,
        MergeStrategy::SynonymLink,
        MergeStrategy::MergeWithLink,
    ] {
        let outcome = apply_plan(
            &graph,
            &MergePlan::new(vec![group.clone()], strategy),
            &Truncate,
        )
        .unwrap();
        println!("== {strategy:?}: {:?}", outcome.stats);
        println!("{}", graph_to_string(&outcome.graph));
    }
}
