//! Isolation forest: random trees isolate anomalies at shallow depth.
//! Score law: 2^(-E[h(x)] / c(psi)).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};

const EULER_MASCHERONI: f64 = 0.577_215_664_9;

/// Average unsuccessful-search path length in a BST of n nodes.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let nf = n as f64;
            let harmonic = (nf - 1.0).ln() + EULER_MASCHERONI;
            2.0 * harmonic - 2.0 * (nf - 1.0) / nf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        value: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<TreeNode>,
    pub subsample: usize,
    pub height_limit: usize,
    pub dim: usize,
}

fn build_tree(
    data: &WindowedDataset,
    indices: &mut Vec<usize>,
    depth: usize,
    limit: usize,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    if depth >= limit || indices.len() <= 1 {
        return TreeNode::Leaf { size: indices.len() };
    }
    let d = data.dim;
    // features with a spread in this node
    let mut candidates = Vec::with_capacity(d);
    for j in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in indices.iter() {
            let v = data.window(i)[j];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            candidates.push((j, lo, hi));
        }
    }
    if candidates.is_empty() {
        return TreeNode::Leaf { size: indices.len() };
    }
    let (feature, lo, hi) = candidates[rng.gen_range(0..candidates.len())];
    let value = rng.gen_range(lo..hi);
    let (mut left_idx, mut right_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| data.window(i)[feature] < value);
    let left = build_tree(data, &mut left_idx, depth + 1, limit, rng);
    let right = build_tree(data, &mut right_idx, depth + 1, limit, rng);
    TreeNode::Split {
        feature,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn path_length(node: &TreeNode, point: &[f64], depth: usize) -> f64 {
    match node {
        TreeNode::Leaf { size } => depth as f64 + average_path_length(*size),
        TreeNode::Split {
            feature,
            value,
            left,
            right,
        } => {
            if point[*feature] < *value {
                path_length(left, point, depth + 1)
            } else {
                path_length(right, point, depth + 1)
            }
        }
    }
}

impl IsolationForestModel {
    pub fn fit(
        train: &WindowedDataset,
        n_trees: usize,
        subsample: usize,
        seed: u64,
    ) -> Result<IsolationForestModel> {
        let n = train.n_windows();
        let psi = subsample.min(n);
        let height_limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            // partial Fisher-Yates draw of psi indices without replacement
            let mut pool: Vec<usize> = (0..n).collect();
            for k in 0..psi {
                let pick = rng.gen_range(k..n);
                pool.swap(k, pick);
            }
            let mut sample: Vec<usize> = pool[..psi].to_vec();
            trees.push(build_tree(train, &mut sample, 0, height_limit, &mut rng));
        }
        Ok(IsolationForestModel {
            trees,
            subsample: psi,
            height_limit,
            dim: train.flattened_dim(),
        })
    }

    pub fn score(&self, test: &WindowedDataset) -> Result<Vec<f64>> {
        if test.flattened_dim() != self.dim {
            return Err(Error::Shape(format!(
                "iforest fitted on dim {}, got {}",
                self.dim,
                test.flattened_dim()
            )));
        }
        let c = average_path_length(self.subsample);
        Ok((0..test.n_windows())
            .map(|i| {
                let point = test.window(i);
                let mean_depth: f64 = self
                    .trees
                    .iter()
                    .map(|t| path_length(t, point, 0))
                    .sum::<f64>()
                    / self.trees.len() as f64;
                if c > 0.0 {
                    (2.0f64).powf(-mean_depth / c)
                } else {
                    0.5
                }
            })
            .collect())
    }
}
