//! Stagewise gradient boosting with shallow regression trees.
//!
//! Regression fits each tree to the current residuals under squared loss.
//! Classification keeps one score per class, fits one tree per class per
//! stage to the softmax gradient, and sets leaf values with a single Newton
//! step of the multinomial deviance.

use serde::{Deserialize, Serialize};

use super::forest::tree_rng;
use super::tree::{Node, Tree, TreeParams, TreeTarget};
use super::Hyperparams;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    /// Initial score per output (one for regression, one per class).
    pub init: Vec<f64>,
    pub learning_rate: f64,
    /// `stages[m][k]` is the tree for output `k` at stage `m`.
    pub stages: Vec<Vec<Tree>>,
    /// Training loss before the first stage and after each stage: mean
    /// squared error (regression) or mean multinomial log loss.
    pub train_loss: Vec<f64>,
}

fn tree_params(hp: &Hyperparams) -> TreeParams {
    TreeParams {
        max_depth: hp.max_depth,
        min_samples_split: 2,
        min_samples_leaf: hp.min_samples_leaf,
        max_features: None,
    }
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

pub fn fit_regression(x: &Matrix, y: &[f64], hp: &Hyperparams, seed: u64) -> Boosted {
    let n = y.len();
    let init = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![init; n];
    let mut train_loss = vec![mse(y, &f)];
    let params = tree_params(hp);
    let idx: Vec<usize> = (0..n).collect();
    let mut stages = Vec::with_capacity(hp.n_estimators);
    let mut residual = vec![0.0; n];
    for m in 0..hp.n_estimators {
        for i in 0..n {
            residual[i] = y[i] - f[i];
        }
        let mut rng = tree_rng(seed, m as u64);
        let tree = Tree::fit(x, TreeTarget::Values(&residual), &idx, &params, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += hp.learning_rate * tree.predict_row(x.row(i))[0];
        }
        train_loss.push(mse(y, &f));
        stages.push(vec![tree]);
    }
    Boosted {
        init: vec![init],
        learning_rate: hp.learning_rate,
        stages,
        train_loss,
    }
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Class prior floor so that absent classes get a finite initial score.
const PRIOR_FLOOR: f64 = 1e-12;

fn log_loss(labels: &[usize], proba: &[Vec<f64>]) -> f64 {
    labels
        .iter()
        .zip(proba)
        .map(|(&l, p)| -p[l].max(1e-300).ln())
        .sum::<f64>()
        / labels.len() as f64
}

pub fn fit_classification(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
    seed: u64,
) -> Boosted {
    let n = labels.len();
    let k_f = n_classes as f64;
    let mut counts = vec![0.0; n_classes];
    for &l in labels {
        counts[l] += 1.0;
    }
    let init: Vec<f64> = counts.iter().map(|c| (c / n as f64).max(PRIOR_FLOOR).ln()).collect();
    let mut scores: Vec<Vec<f64>> = vec![init.clone(); n];
    let mut proba: Vec<Vec<f64>> = vec![vec![0.0; n_classes]; n];
    for i in 0..n {
        softmax_into(&scores[i], &mut proba[i]);
    }
    let mut train_loss = vec![log_loss(labels, &proba)];
    let params = tree_params(hp);
    let idx: Vec<usize> = (0..n).collect();
    let mut stages = Vec::with_capacity(hp.n_estimators);
    let mut residual = vec![0.0; n];
    for m in 0..hp.n_estimators {
        let mut stage = Vec::with_capacity(n_classes);
        let mut leaves: Vec<Vec<usize>> = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for i in 0..n {
                residual[i] = f64::from(u8::from(labels[i] == k)) - proba[i][k];
            }
            let mut rng = tree_rng(seed, (m * n_classes + k) as u64);
            let mut tree = Tree::fit(x, TreeTarget::Values(&residual), &idx, &params, &mut rng);
            let leaf_of: Vec<usize> = (0..n).map(|i| tree.leaf_index(x.row(i))).collect();
            let mut num = vec![0.0; tree.nodes.len()];
            let mut den = vec![0.0; tree.nodes.len()];
            for i in 0..n {
                let r = residual[i];
                num[leaf_of[i]] += r;
                den[leaf_of[i]] += r.abs() * (1.0 - r.abs());
            }
            for leaf in 0..tree.nodes.len() {
                if matches!(tree.nodes[leaf], Node::Leaf { .. }) {
                    let gamma = if den[leaf] < 1e-150 {
                        0.0
                    } else {
                        (k_f - 1.0) / k_f * num[leaf] / den[leaf]
                    };
                    tree.set_leaf_value(leaf, vec![gamma]);
                }
            }
            stage.push(tree);
            leaves.push(leaf_of);
        }
        // All class trees see the same probabilities within a stage.
        for (k, tree) in stage.iter().enumerate() {
            for i in 0..n {
                if let Node::Leaf { value } = &tree.nodes[leaves[k][i]] {
                    scores[i][k] += hp.learning_rate * value[0];
                }
            }
        }
        for i in 0..n {
            softmax_into(&scores[i], &mut proba[i]);
        }
        train_loss.push(log_loss(labels, &proba));
        stages.push(stage);
    }
    Boosted {
        init,
        learning_rate: hp.learning_rate,
        stages,
        train_loss,
    }
}

impl Boosted {
    fn raw_scores(&self, row: &[f64]) -> Vec<f64> {
        let mut s = self.init.clone();
        for stage in &self.stages {
            for (k, tree) in stage.iter().enumerate() {
                s[k] += self.learning_rate * tree.predict_row(row)[0];
            }
        }
        s
    }

    pub fn predict_value(&self, row: &[f64]) -> f64 {
        self.raw_scores(row)[0]
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let s = self.raw_scores(row);
        let mut p = vec![0.0; s.len()];
        softmax_into(&s, &mut p);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 / 10.0, ((i * 3) % 7) as f64]).collect();
        let y = rows.iter().map(|r| r[0].sin() + 0.1 * r[1]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn squared_loss_never_increases_per_stage() {
        let (x, y) = data();
        let hp = Hyperparams {
            n_estimators: 200,
            learning_rate: 0.01,
            max_depth: Some(3),
            ..Hyperparams::default()
        };
        let b = fit_regression(&x, &y, &hp, 0);
        assert_eq!(b.train_loss.len(), 201);
        assert!(b.train_loss.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(b.train_loss[200] < 0.5 * b.train_loss[0]);
    }

    #[test]
    fn zero_stages_predict_the_mean() {
        let (x, y) = data();
        let hp = Hyperparams {
            n_estimators: 0,
            ..Hyperparams::default()
        };
        let b = fit_regression(&x, &y, &hp, 0);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert_eq!(b.predict_value(x.row(3)), mean);
    }

    #[test]
    fn multinomial_fits_separable_classes() {
        let rows: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = (0..40).map(|i| if i < 20 { 0 } else { 2 }).collect();
        let hp = Hyperparams {
            n_estimators: 30,
            max_depth: Some(2),
            ..Hyperparams::default()
        };
        let b = fit_classification(&x, &labels, 4, &hp, 0);
        assert!(b.train_loss.windows(2).all(|w| w[1] <= w[0]));
        let p = b.predict_proba(&[3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.9);
        assert!(b.predict_proba(&[35.0])[2] > 0.9);
        // Classes never seen keep a negligible share.
        assert!(p[1] < 1e-6 && p[3] < 1e-6);
    }
}
