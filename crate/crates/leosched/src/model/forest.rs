//! Random forest over dense f64 feature vectors, written against the
//! usual recipe: bootstrap resampling per tree, Gini splits over
//! ceil(sqrt(F)) randomly drawn candidate features, leaves holding class
//! count histograms. Everything is seed-deterministic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// None = grow until pure or below min_samples_split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        /// Goes left when value <= threshold.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Class index -> training-sample count.
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf class-count histogram for a sample.
    pub fn leaf_counts<'a>(&'a self, features: &[f64]) -> &'a [u32] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

fn gini(counts: &[u32], total: f64) -> f64 {
    let mut g = 1.0;
    for &c in counts {
        let p = f64::from(c) / total;
        g -= p * p;
    }
    g
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: ForestParams,
    n_candidates: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn class_counts(&self, idxs: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &i in idxs {
            counts[self.y[i]] += 1;
        }
        counts
    }

    /// Best (threshold, weighted child Gini) for one feature over the node's
    /// samples, scanning midpoints between consecutive distinct values.
    fn best_split_on(&self, idxs: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut order: Vec<usize> = idxs.to_vec();
        order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let n = order.len() as f64;
        let mut left = vec![0u32; self.n_classes];
        let mut right = self.class_counts(idxs);
        let mut best: Option<(f64, f64)> = None;
        for w in 0..order.len() - 1 {
            let i = order[w];
            left[self.y[i]] += 1;
            right[self.y[i]] -= 1;
            let v = self.x[i][feature];
            let v_next = self.x[order[w + 1]][feature];
            if v == v_next {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = n - nl;
            let score = (nl * gini(&left, nl) + nr * gini(&right, nr)) / n;
            let threshold = v + (v_next - v) / 2.0;
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((threshold, score));
            }
        }
        best
    }

    fn build(&mut self, idxs: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(idxs);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || too_deep || idxs.len() < self.params.min_samples_split {
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        }

        let n_features = self.x[0].len();
        let mut features: Vec<usize> = (0..n_features).collect();
        features.shuffle(rng);
        features.truncate(self.n_candidates);

        let mut best: Option<(usize, f64, f64)> = None;
        for f in features {
            if let Some((threshold, score)) = self.best_split_on(idxs, f) {
                if best.is_none_or(|(_, _, s)| score < s) {
                    best = Some((f, threshold, score));
                }
            }
        }
        let Some((feature, threshold, _)) = best else {
            // all candidate features constant on this node
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idxs
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        // reserve the split slot before recursing so child indices are known
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let left = self.build(&left_idx, depth + 1, rng);
        let right = self.build(&right_idx, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Train a forest. `x` is row-major samples, `y` class indices in
/// [0, n_classes).
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: ForestParams,
    seed: u64,
) -> Forest {
    assert_eq!(x.len(), y.len());
    assert!(!x.is_empty());
    let n = x.len();
    let n_features = x[0].len();
    let n_candidates = (n_features as f64).sqrt().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.gen()).collect();

    let trees = tree_seeds
        .into_iter()
        .map(|tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut builder = Builder {
                x,
                y,
                n_classes,
                params,
                n_candidates,
                nodes: Vec::new(),
            };
            builder.build(&sample, 0, &mut rng);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();
    Forest {
        params,
        n_classes,
        trees,
    }
}

impl Forest {
    /// Mean of per-tree leaf histograms, each normalized to probabilities.
    pub fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        let mut probs = vec![0.0; self.n_classes];
        for tree in &self.trees {
            let counts = tree.leaf_counts(features);
            let total: u32 = counts.iter().sum();
            if total == 0 {
                continue;
            }
            for (p, &c) in probs.iter_mut().zip(counts) {
                *p += f64::from(c) / f64::from(total);
            }
        }
        for p in &mut probs {
            *p /= self.trees.len() as f64;
        }
        probs
    }

    /// Class indices ranked by probability, ties to the lower index.
    pub fn ranked_classes(&self, features: &[f64]) -> Vec<usize> {
        let probs = self.predict_proba(features);
        let mut order: Vec<usize> = (0..self.n_classes).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two well-separated blobs on one feature.
    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let class = rng.gen_range(0..2usize);
            let base = if class == 0 { 0.0 } else { 10.0 };
            x.push(vec![base + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            y.push(class);
        }
        (x, y)
    }

    fn params(n_trees: usize) -> ForestParams {
        ForestParams {
            n_trees,
            max_depth: None,
            min_samples_split: 2,
        }
    }

    #[test]
    fn separable_data_is_learned() {
        let (x, y) = blobs(200, 1);
        let forest = train_forest(&x, &y, 2, params(20), 7);
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| forest.ranked_classes(xi)[0] == yi)
            .count();
        assert!(correct >= 198, "correct {correct}");
        // far out-of-sample points
        assert_eq!(forest.ranked_classes(&[-0.5, 0.0])[0], 0);
        assert_eq!(forest.ranked_classes(&[10.5, 0.0])[0], 1);
    }

    #[test]
    fn gini_hand_values() {
        assert_eq!(gini(&[4, 0], 4.0), 0.0);
        assert!((gini(&[2, 2], 4.0) - 0.5).abs() < 1e-12);
        assert!((gini(&[1, 3], 4.0) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn single_pure_tree_predicts_its_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![0, 0, 1, 1];
        let forest = train_forest(&x, &y, 2, params(1), 3);
        for (xi, &yi) in x.iter().zip(&y) {
            let counts = forest.trees[0].leaf_counts(xi);
            // unbounded depth, min split 2: leaves are pure
            assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 1);
            // the bootstrap may miss a sample; when present it must agree
            if counts[yi] > 0 {
                assert_eq!(forest.ranked_classes(xi)[0], yi);
            }
        }
    }

    #[test]
    fn proba_matches_brute_force_average() {
        let (x, y) = blobs(120, 2);
        let forest = train_forest(&x, &y, 2, params(15), 11);
        for probe in [&x[0], &x[5], &x[99]] {
            let probs = forest.predict_proba(probe);
            let mut manual = vec![0.0; 2];
            for tree in &forest.trees {
                let counts = tree.leaf_counts(probe);
                let total: u32 = counts.iter().sum();
                for (m, &c) in manual.iter_mut().zip(counts) {
                    *m += f64::from(c) / f64::from(total);
                }
            }
            for m in &mut manual {
                *m /= forest.trees.len() as f64;
            }
            for (a, b) in probs.iter().zip(&manual) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = blobs(100, 3);
        let a = train_forest(&x, &y, 2, params(10), 42);
        let b = train_forest(&x, &y, 2, params(10), 42);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = train_forest(&x, &y, 2, params(10), 43);
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn max_depth_limits_tree() {
        let (x, y) = blobs(200, 4);
        let p = ForestParams {
            n_trees: 5,
            max_depth: Some(2),
            min_samples_split: 2,
        };
        let forest = train_forest(&x, &y, 2, p, 1);
        for tree in &forest.trees {
            fn depth(nodes: &[Node], idx: usize) -> usize {
                match &nodes[idx] {
                    Node::Leaf { .. } => 0,
                    Node::Split { left, right, .. } => {
                        1 + depth(nodes, *left).max(depth(nodes, *right))
                    }
                }
            }
            assert!(depth(&tree.nodes, 0) <= 2);
        }
    }
}
