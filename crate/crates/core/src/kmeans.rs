//! Lloyd's k-means with k-means++ seeding over entity vectors.

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::BlockingError;
use crate::graph::EntityId;
use crate::util::squared_distance;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    /// Cluster index per id, numbered by first appearance in id order.
    pub assignments: BTreeMap<EntityId, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster SSE after each assignment step.
    pub sse_history: Vec<f64>,
    /// The k actually used, after clamping to the number of distinct points.
    pub k: usize,
}

impl KMeansResult {
    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }

    pub fn clusters(&self) -> Vec<Vec<EntityId>> {
        let n = self.assignments.values().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); n];
        for (id, &c) in &self.assignments {
            out[c].push(id.clone());
        }
        out
    }
}

/// `k` is lowered to the number of distinct points when it exceeds it.
pub fn kmeans(
    vectors: &BTreeMap<EntityId, Vec<f64>>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult, BlockingError> {
    if vectors.is_empty() {
        return Err(BlockingError::EmptyInput);
    }
    let ids: Vec<&EntityId> = vectors.keys().collect();
    let points: Vec<&[f64]> = vectors.values().map(Vec::as_slice).collect();
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(BlockingError::RaggedInput);
    }
    let distinct = points
        .iter()
        .map(|p| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len();
    let k = k.clamp(1, distinct);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(&points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut sse_history = Vec::new();

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut sse = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, dist) = nearest(p, &centroids);
            sse += dist;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        sse_history.push(sse);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            // empty clusters keep their previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let mut relabel = BTreeMap::new();
    let mut assignments = BTreeMap::new();
    for (id, &c) in ids.iter().zip(&assignment) {
        let next = relabel.len();
        let label = *relabel.entry(c).or_insert(next);
        assignments.insert((*id).clone(), label);
    }
    let mut compact = vec![Vec::new(); relabel.len()];
    for (old, new) in relabel {
        compact[new] = centroids[old].clone();
    }
    Ok(KMeansResult {
        assignments,
        centroids: compact,
        sse_history,
        k,
    })
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// First centroid uniform; each further one drawn with probability proportional
/// to its squared distance from the nearest chosen centroid.
fn seed_plus_plus(points: &[&[f64]], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // all remaining weight is zero: every point coincides with a centroid
            Err(_) => break,
        };
        let c = points[next].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(points: &[(&str, Vec<f64>)]) -> BTreeMap<EntityId, Vec<f64>> {
        points
            .iter()
            .map(|(id, v)| (EntityId::from(*id), v.clone()))
            .collect()
    }

    #[test]
    fn k_one_puts_everything_together() {
        let pts = map(&[("a", vec![0.0]), ("b", vec![5.0]), ("c", vec![9.0])]);
        let r = kmeans(&pts, 1, 3, 50).unwrap();
        assert!(r.assignments.values().all(|&c| c == 0));
    }

    #[test]
    fn k_equal_distinct_points() {
        let pts = map(&[
            ("a", vec![0.0, 0.0]),
            ("b", vec![1.0, 0.0]),
            ("c", vec![1.0, 0.0]),
            ("d", vec![3.0, 3.0]),
        ]);
        let r = kmeans(&pts, 3, 9, 50).unwrap();
        assert_eq!(r.k, 3);
        assert_eq!(r.assignments["b"], r.assignments["c"]);
        assert_ne!(r.assignments["a"], r.assignments["b"]);
        assert_ne!(r.assignments["a"], r.assignments["d"]);
        assert_eq!(r.sse(), 0.0);
    }

    #[test]
    fn k_is_clamped_to_distinct_points() {
        let pts = map(&[("a", vec![1.0]), ("b", vec![1.0])]);
        let r = kmeans(&pts, 5, 0, 10).unwrap();
        assert_eq!(r.k, 1);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(
            kmeans(&BTreeMap::new(), 2, 0, 10),
            Err(BlockingError::EmptyInput)
        ));
        let pts = map(&[("a", vec![1.0]), ("b", vec![1.0, 2.0])]);
        assert!(matches!(
            kmeans(&pts, 1, 0, 10),
            Err(BlockingError::RaggedInput)
        ));
    }
}
