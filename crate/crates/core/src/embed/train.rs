//! Single-threaded SGD trainer for TransE, DistMult and ComplEx.
//!
//! Negatives are drawn by corrupting the head or the tail (each with
//! probability 1/2) with a uniformly chosen entity, redrawing when the
//! corruption is itself an observed triple. TransE minimizes the margin
//! ranking loss and renormalizes entity vectors to unit length after every
//! epoch; DistMult and ComplEx minimize the logistic loss over positive and
//! negative labels.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::score::{
    complex_grad, distmult_grad, logistic_loss, logistic_loss_slope, margin_ranking_loss,
    transe_grad, Norm, ScoreGrad,
};
use super::{EmbeddingTable, ModelTag};
use crate::error::EmbeddingError;
use crate::graph::KnowledgeGraph;

/// Corruption draws before accepting an observed triple as a negative.
const MAX_RESAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgeModel {
    TransE,
    DistMult,
    ComplEx,
}

impl KgeModel {
    pub fn tag(self) -> ModelTag {
        match self {
            KgeModel::TransE => ModelTag::TransE,
            KgeModel::DistMult => ModelTag::DistMult,
            KgeModel::ComplEx => ModelTag::ComplEx,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dimension: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    /// TransE only.
    pub margin: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// TransE only.
    pub norm: Norm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dimension: 64,
            epochs: 100,
            learning_rate: 0.05,
            negatives_per_positive: 1,
            margin: 1.0,
            batch_size: 32,
            seed: 0,
            norm: Norm::L2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |what: &str| {
            Err(EmbeddingError::InvalidConfig(format!(
                "{what} must be positive"
            )))
        };
        if self.dimension == 0 {
            return bad("dimension");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        Ok(())
    }
}

/// Per-epoch summary returned alongside the table.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

pub fn train_kg_embeddings(
    graph: &KnowledgeGraph,
    model: KgeModel,
    config: &TrainConfig,
) -> Result<EmbeddingTable, EmbeddingError> {
    train_with_log(graph, model, config).map(|(table, _)| table)
}

pub fn train_with_log(
    graph: &KnowledgeGraph,
    model: KgeModel,
    config: &TrainConfig,
) -> Result<(EmbeddingTable, TrainLog), EmbeddingError> {
    config.validate()?;
    if graph.entity_count() == 0 {
        return Err(EmbeddingError::EmptyGraph);
    }

    let entity_ids: Vec<_> = graph.entity_ids().cloned().collect();
    let entity_index: HashMap<_, _> = entity_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let relation_labels: Vec<String> = graph
        .relation_labels()
        .into_iter()
        .map(str::to_owned)
        .collect();
    let relation_index: HashMap<_, _> = relation_labels
        .iter()
        .enumerate()
        .map(|(i, r)| (r.clone(), i))
        .collect();

    let positives: Vec<(usize, usize, usize)> = graph
        .triples()
        .iter()
        .filter_map(|t| {
            Some((
                *entity_index.get(&t.source)?,
                relation_index[&t.relation],
                *entity_index.get(&t.target)?,
            ))
        })
        .collect();
    let observed: HashSet<(usize, usize, usize)> = positives.iter().copied().collect();

    let width = match model {
        KgeModel::ComplEx => 2 * config.dimension,
        _ => config.dimension,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Xavier-uniform over a width x width fan.
    let bound = (6.0 / (2.0 * width as f64)).sqrt();
    let mut init = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..width)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect()
            })
            .collect()
    };
    let mut ent = init(entity_ids.len());
    let mut rel = init(relation_labels.len());
    if model == KgeModel::TransE {
        ent.iter_mut().for_each(|v| normalize(v));
    }

    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let n_entities = entity_ids.len();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut ent_grad: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut rel_grad: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let scale = 1.0 / batch.len() as f64;

            for &p in batch {
                let (h, r, t) = positives[p];
                let pos = model_grad(model, config.norm, &ent[h], &rel[r], &ent[t]);
                if model != KgeModel::TransE {
                    epoch_loss += logistic_loss(pos.score, 1.0);
                    let slope = logistic_loss_slope(pos.score, 1.0) * scale;
                    accumulate(&mut ent_grad, &mut rel_grad, (h, r, t), &pos, slope, width);
                }
                for _ in 0..config.negatives_per_positive {
                    let (nh, nt) = corrupt(&mut rng, (h, r, t), n_entities, &observed);
                    let neg = model_grad(model, config.norm, &ent[nh], &rel[r], &ent[nt]);
                    match model {
                        KgeModel::TransE => {
                            let loss = margin_ranking_loss(pos.score, neg.score, config.margin);
                            epoch_loss += loss;
                            if loss > 0.0 {
                                accumulate(
                                    &mut ent_grad,
                                    &mut rel_grad,
                                    (h, r, t),
                                    &pos,
                                    -scale,
                                    width,
                                );
                                accumulate(
                                    &mut ent_grad,
                                    &mut rel_grad,
                                    (nh, r, nt),
                                    &neg,
                                    scale,
                                    width,
                                );
                            }
                        }
                        _ => {
                            epoch_loss += logistic_loss(neg.score, -1.0);
                            let slope = logistic_loss_slope(neg.score, -1.0) * scale;
                            accumulate(
                                &mut ent_grad,
                                &mut rel_grad,
                                (nh, r, nt),
                                &neg,
                                slope,
                                width,
                            );
                        }
                    }
                }
            }

            for (i, g) in ent_grad {
                ent[i]
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(w, g)| *w -= config.learning_rate * g);
            }
            for (i, g) in rel_grad {
                rel[i]
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(w, g)| *w -= config.learning_rate * g);
            }
        }

        let params_finite = ent
            .iter()
            .chain(rel.iter())
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !epoch_loss.is_finite() || !params_finite {
            return Err(EmbeddingError::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        if model == KgeModel::TransE {
            ent.iter_mut().for_each(|v| normalize(v));
        }
        log.epoch_losses.push(epoch_loss);
    }

    let table = EmbeddingTable::new(
        model.tag(),
        config.dimension,
        entity_ids.into_iter().zip(ent).collect(),
        Some(relation_labels.into_iter().zip(rel).collect()),
    )?;
    Ok((table, log))
}

fn model_grad(model: KgeModel, norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> ScoreGrad {
    match model {
        KgeModel::TransE => transe_grad(h, r, t, norm),
        KgeModel::DistMult => distmult_grad(h, r, t),
        KgeModel::ComplEx => complex_grad(h, r, t),
    }
}

/// Adds `coef * d score` to the loss gradient of each parameter involved.
fn accumulate(
    ent_grad: &mut BTreeMap<usize, Vec<f64>>,
    rel_grad: &mut BTreeMap<usize, Vec<f64>>,
    (h, r, t): (usize, usize, usize),
    g: &ScoreGrad,
    coef: f64,
    width: usize,
) {
    let add =
        |slot: &mut Vec<f64>, d: &[f64]| slot.iter_mut().zip(d).for_each(|(s, d)| *s += coef * d);
    add(ent_grad.entry(h).or_insert_with(|| vec![0.0; width]), &g.dh);
    add(rel_grad.entry(r).or_insert_with(|| vec![0.0; width]), &g.dr);
    add(ent_grad.entry(t).or_insert_with(|| vec![0.0; width]), &g.dt);
}

fn corrupt(
    rng: &mut ChaCha8Rng,
    (h, r, t): (usize, usize, usize),
    n_entities: usize,
    observed: &HashSet<(usize, usize, usize)>,
) -> (usize, usize) {
    let mut candidate = (h, t);
    for _ in 0..MAX_RESAMPLES {
        let e = rng.random_range(0..n_entities);
        candidate = if rng.random_bool(0.5) { (e, t) } else { (h, e) };
        if !observed.contains(&(candidate.0, r, candidate.1)) {
            break;
        }
    }
    candidate
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Entity, Triple};

    fn tiny() -> KnowledgeGraph {
        KnowledgeGraph::from_parts(
            vec![Entity::named("a"), Entity::named("b")],
            vec![Triple::new("a", "r", "b")],
        )
    }

    #[test]
    fn shapes_for_each_model() {
        let config = TrainConfig {
            dimension: 4,
            epochs: 5,
            ..TrainConfig::default()
        };
        for model in [KgeModel::TransE, KgeModel::DistMult, KgeModel::ComplEx] {
            let table = train_kg_embeddings(&tiny(), model, &config).unwrap();
            assert_eq!(table.len(), 2);
            let relations = table.relation_vectors().unwrap();
            assert_eq!(relations.len(), 1);
            let width = if model == KgeModel::ComplEx { 8 } else { 4 };
            for v in table.entity_vectors().values().chain(relations.values()) {
                assert_eq!(v.len(), width);
                assert!(v.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let config = TrainConfig {
            dimension: 8,
            epochs: 20,
            seed: 11,
            ..TrainConfig::default()
        };
        for model in [KgeModel::TransE, KgeModel::DistMult, KgeModel::ComplEx] {
            let a = train_kg_embeddings(&tiny(), model, &config).unwrap();
            let b = train_kg_embeddings(&tiny(), model, &config).unwrap();
            assert_eq!(a, b);
        }
        let other = TrainConfig {
            seed: 12,
            ..config.clone()
        };
        assert_ne!(
            train_kg_embeddings(&tiny(), KgeModel::TransE, &config).unwrap(),
            train_kg_embeddings(&tiny(), KgeModel::TransE, &other).unwrap()
        );
    }

    #[test]
    fn transe_keeps_unit_norm() {
        let config = TrainConfig {
            dimension: 8,
            epochs: 3,
            ..TrainConfig::default()
        };
        let table = train_kg_embeddings(&tiny(), KgeModel::TransE, &config).unwrap();
        for v in table.entity_vectors().values() {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn isolated_entities_still_get_vectors() {
        let mut g = tiny();
        g.add_entity(Entity::named("lonely"));
        let table = train_kg_embeddings(
            &g,
            KgeModel::DistMult,
            &TrainConfig {
                dimension: 4,
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(table.get("lonely").is_some());
    }

    #[test]
    fn rejects_empty_graph_and_bad_config() {
        assert!(matches!(
            train_kg_embeddings(
                &KnowledgeGraph::new(),
                KgeModel::TransE,
                &TrainConfig::default()
            ),
            Err(EmbeddingError::EmptyGraph)
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_kg_embeddings(&tiny(), KgeModel::TransE, &bad),
            Err(EmbeddingError::InvalidConfig(_))
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let config = TrainConfig {
            dimension: 4,
            epochs: 50,
            learning_rate: 1e200,
            batch_size: 1,
            ..Default::default()
        };
        match train_kg_embeddings(&tiny(), KgeModel::DistMult, &config) {
            Err(EmbeddingError::Diverged { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
