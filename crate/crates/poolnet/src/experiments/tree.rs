//! Local-versus-global decision making on a complete binary tree.
//!
//! Each non-root node carries a positive value. A path's score is the product
//! of the values along it (the root contributes nothing). The *greedy* walker
//! descends one step at a time, always choosing the larger child; the
//! *global* walker picks the leaf path with the largest total product. The
//! experiment estimates the probability that the two disagree on where to
//! land.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A complete binary tree of the given depth with one value per non-root
/// node, stored heap-style: node `i` has children `2i + 1` and `2i + 2`,
/// values indexed by `node - 1` (the root holds no value).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTree {
    pub depth: usize,
    /// Values for nodes 1 .. 2^(depth+1) - 2 in heap order.
    pub values: Vec<f64>,
}

impl ValueTree {
    /// Number of non-root nodes for a given depth.
    pub fn node_count(depth: usize) -> usize {
        (1usize << (depth + 1)) - 2
    }

    pub fn new(depth: usize, values: Vec<f64>) -> Option<Self> {
        if depth == 0 || values.len() != Self::node_count(depth) {
            return None;
        }
        Some(ValueTree { depth, values })
    }

    /// I.i.d. values drawn uniformly from `(0, 1)`.
    pub fn random_uniform(depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let values = (0..Self::node_count(depth))
            .map(|_| loop {
                let v: f64 = rng.gen();
                if v > 0.0 {
                    break v;
                }
            })
            .collect();
        ValueTree { depth, values }
    }

    fn value(&self, node: usize) -> f64 {
        self.values[node - 1]
    }

    /// Leaf index (0-based, left to right) reached by greedy descent: at each
    /// node take the child with the larger raw value, ties to the left child.
    pub fn greedy_leaf(&self) -> usize {
        let mut node = 0usize;
        for _ in 0..self.depth {
            let left = 2 * node + 1;
            let right = 2 * node + 2;
            node = if self.value(right) > self.value(left) {
                right
            } else {
                left
            };
        }
        node - ((1 << self.depth) - 1)
    }

    /// Product of values along the root-to-leaf path ending at `leaf`.
    pub fn path_product(&self, leaf: usize) -> f64 {
        let mut node = leaf + ((1 << self.depth) - 1);
        let mut product = 1.0;
        while node > 0 {
            product *= self.value(node);
            node = (node - 1) / 2;
        }
        product
    }

    /// Leaf with the maximal path product, ties to the lowest leaf index.
    pub fn global_leaf(&self) -> usize {
        let leaves = 1usize << self.depth;
        let mut best = 0;
        let mut best_p = self.path_product(0);
        for leaf in 1..leaves {
            let p = self.path_product(leaf);
            if p > best_p {
                best = leaf;
                best_p = p;
            }
        }
        best
    }
}

/// A Monte-Carlo probability with its binomial standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub trials: usize,
    pub stderr: f64,
}

impl ProbabilityEstimate {
    pub fn from_counts(events: usize, trials: usize) -> Self {
        let p = events as f64 / trials as f64;
        ProbabilityEstimate {
            p,
            trials,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

/// P(greedy leaf != global leaf) over random uniform trees of `depth`.
pub fn disagreement_probability(depth: usize, trials: usize, seed: u64) -> ProbabilityEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = 0;
    for _ in 0..trials {
        let tree = ValueTree::random_uniform(depth, &mut rng);
        if tree.greedy_leaf() != tree.global_leaf() {
            events += 1;
        }
    }
    ProbabilityEstimate::from_counts(events, trials)
}

/// Exact disagreement probability when every node value is drawn uniformly
/// from a small finite alphabet, by exhausting all assignments.
pub fn exhaustive_disagreement(depth: usize, alphabet: &[f64]) -> f64 {
    let nodes = ValueTree::node_count(depth);
    let total = alphabet.len().pow(nodes as u32);
    let mut events = 0usize;
    let mut values = vec![alphabet[0]; nodes];
    for code in 0..total {
        let mut c = code;
        for v in values.iter_mut() {
            *v = alphabet[c % alphabet.len()];
            c /= alphabet.len();
        }
        let tree = ValueTree {
            depth,
            values: values.clone(),
        };
        if tree.greedy_leaf() != tree.global_leaf() {
            events += 1;
        }
    }
    events as f64 / total as f64
}

/// Monte-Carlo estimate under the same finite alphabet, for comparison with
/// [`exhaustive_disagreement`].
pub fn alphabet_disagreement(
    depth: usize,
    alphabet: &[f64],
    trials: usize,
    seed: u64,
) -> ProbabilityEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = ValueTree::node_count(depth);
    let mut events = 0;
    for _ in 0..trials {
        let values: Vec<f64> = (0..nodes)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let tree = ValueTree {
            depth,
            values,
        };
        if tree.greedy_leaf() != tree.global_leaf() {
            events += 1;
        }
    }
    ProbabilityEstimate::from_counts(events, trials)
}
