//! Bagged trees with per-split feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams, TreeTarget};
use super::Hyperparams;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

/// Independent random stream for tree `index` of a model seeded with `seed`.
pub fn tree_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn tree_params(hp: &Hyperparams, max_features: Option<usize>) -> TreeParams {
    TreeParams {
        max_depth: hp.max_depth,
        min_samples_split: 2,
        min_samples_leaf: hp.min_samples_leaf,
        max_features,
    }
}

fn features_per_split(hp: &Hyperparams, target: TreeTarget<'_>, d: usize) -> usize {
    let m = match (hp.max_features, target) {
        (Some(f), _) => (f * d as f64).round() as usize,
        (None, TreeTarget::Classes { .. }) => (d as f64).sqrt().floor() as usize,
        (None, TreeTarget::Values(_)) => d,
    };
    m.clamp(1, d.max(1))
}

/// One tree on all rows. Uses every feature unless `max_features` is set.
pub fn single_tree(x: &Matrix, target: TreeTarget<'_>, hp: &Hyperparams, seed: u64) -> Tree {
    let d = x.cols();
    let mf = hp.max_features.map(|_| features_per_split(hp, target, d));
    let idx: Vec<usize> = (0..x.rows()).collect();
    Tree::fit(x, target, &idx, &tree_params(hp, mf), &mut tree_rng(seed, 0))
}

pub fn fit(x: &Matrix, target: TreeTarget<'_>, hp: &Hyperparams, seed: u64) -> Forest {
    let n = x.rows();
    let params = tree_params(hp, Some(features_per_split(hp, target, x.cols())));
    let trees = (0..hp.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t as u64);
            let idx: Vec<usize> = if hp.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(x, target, &idx, &params, &mut rng)
        })
        .collect();
    Forest { trees }
}

impl Forest {
    /// Mean of the per-tree leaf values.
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = self.trees[0].predict_row(row).to_vec();
        for t in &self.trees[1..] {
            for (a, v) in acc.iter_mut().zip(t.predict_row(row)) {
                *a += v;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    /// Mean decrease in impurity: per-tree gains normalized to one,
    /// averaged over trees, renormalized. Uniform when no tree splits.
    pub fn feature_importance(&self) -> Vec<f64> {
        let d = self.trees[0].n_features;
        let mut acc = vec![0.0; d];
        for t in &self.trees {
            let g = t.feature_gains();
            let total: f64 = g.iter().sum();
            if total > 0.0 {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v / total;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|a| *a /= total);
        } else {
            acc.iter_mut().for_each(|a| *a = 1.0 / d as f64);
        }
        acc
    }
}
