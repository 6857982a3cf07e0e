//! CART trees with axis-aligned splits: variance reduction for regression,
//! Gini impurity for classification.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease of this split.
        gain: f64,
    },
    /// Mean target (regression) or class frequencies (classification).
    Leaf { value: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum TreeTarget<'a> {
    Values(&'a [f64]),
    Classes { labels: &'a [usize], n_classes: usize },
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Tree {
    /// Grows a tree on `samples` (row indices, repeats allowed).
    pub fn fit(
        x: &Matrix,
        target: TreeTarget<'_>,
        samples: &[usize],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut tree = Tree {
            nodes: Vec::new(),
            n_features: x.cols(),
        };
        tree.nodes.push(Node::Leaf { value: Vec::new() });
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, samples.to_vec(), 0)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let split = if idx.len() >= params.min_samples_split.max(2)
                && params.max_depth.is_none_or(|d| depth < d)
            {
                best_split(x, target, &idx, params, rng)
            } else {
                None
            };
            match split {
                Some(s) => {
                    let left = tree.nodes.len();
                    tree.nodes.push(Node::Leaf { value: Vec::new() });
                    let right = tree.nodes.len();
                    tree.nodes.push(Node::Leaf { value: Vec::new() });
                    tree.nodes[slot] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                        gain: s.gain,
                    };
                    stack.push((right, s.right, depth + 1));
                    stack.push((left, s.left, depth + 1));
                }
                None => {
                    tree.nodes[slot] = Node::Leaf {
                        value: leaf_value(target, &idx),
                    };
                }
            }
        }
        tree
    }

    /// Index of the leaf node reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn set_leaf_value(&mut self, leaf: usize, value: Vec<f64>) {
        if let Node::Leaf { value: v } = &mut self.nodes[leaf] {
            *v = value;
        }
    }

    /// Total split gain per feature.
    pub fn feature_gains(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                out[*feature] += gain;
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }
}

fn leaf_value(target: TreeTarget<'_>, idx: &[usize]) -> Vec<f64> {
    match target {
        TreeTarget::Values(y) => {
            vec![idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64]
        }
        TreeTarget::Classes { labels, n_classes } => {
            let mut counts = vec![0.0; n_classes];
            for &i in idx {
                counts[labels[i]] += 1.0;
            }
            let n = idx.len() as f64;
            counts.iter_mut().for_each(|c| *c /= n);
            counts
        }
    }
}

fn best_split(
    x: &Matrix,
    target: TreeTarget<'_>,
    idx: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<BestSplit> {
    let d = x.cols();
    // With subsampling, features are visited in random order until `m`
    // non-constant ones have been scored; constant columns do not count.
    let (features, quota): (Vec<usize>, usize) = match params.max_features {
        Some(m) if m < d => (sample(rng, d, d).into_vec(), m.max(1)),
        _ => ((0..d).collect(), d),
    };
    let mut visited = 0;
    let n = idx.len();
    let min_leaf = params.min_samples_leaf.max(1);

    // Score to maximize is Σ_side S(side); gain = score − S(parent).
    let (parent_score, tolerance) = match target {
        TreeTarget::Values(y) => {
            let s: f64 = idx.iter().map(|&i| y[i]).sum();
            let ss: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
            let sse = ss - s * s / n as f64;
            if sse <= 1e-14 * ss.max(f64::MIN_POSITIVE) {
                return None;
            }
            (s * s / n as f64, 1e-12 * ss)
        }
        TreeTarget::Classes { labels, n_classes } => {
            let mut counts = vec![0.0; n_classes];
            for &i in idx {
                counts[labels[i]] += 1.0;
            }
            if counts.iter().filter(|&&c| c > 0.0).count() < 2 {
                return None;
            }
            (counts.iter().map(|c| c * c).sum::<f64>() / n as f64, 1e-12 * n as f64)
        }
    };

    let mut best: Option<(usize, f64, f64, usize)> = None; // feature, threshold, gain, split position
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in &features {
        if visited == quota {
            break;
        }
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (x.get(i, f), i)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if pairs[0].0 == pairs[n - 1].0 {
            continue;
        }
        visited += 1;
        let mut found: Option<(f64, usize)> = None;
        match target {
            TreeTarget::Values(y) => {
                let total: f64 = pairs.iter().map(|p| y[p.1]).sum();
                let mut left = 0.0;
                for k in 1..n {
                    left += y[pairs[k - 1].1];
                    if k < min_leaf || n - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                        continue;
                    }
                    let right = total - left;
                    let score = left * left / k as f64 + right * right / (n - k) as f64;
                    if found.is_none_or(|(s, _)| score > s) {
                        found = Some((score, k));
                    }
                }
            }
            TreeTarget::Classes { labels, n_classes } => {
                let mut total = vec![0.0; n_classes];
                for p in pairs.iter() {
                    total[labels[p.1]] += 1.0;
                }
                let mut left = vec![0.0; n_classes];
                for k in 1..n {
                    left[labels[pairs[k - 1].1]] += 1.0;
                    if k < min_leaf || n - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                        continue;
                    }
                    let mut sl = 0.0;
                    let mut sr = 0.0;
                    for c in 0..n_classes {
                        sl += left[c] * left[c];
                        let r = total[c] - left[c];
                        sr += r * r;
                    }
                    let score = sl / k as f64 + sr / (n - k) as f64;
                    if found.is_none_or(|(s, _)| score > s) {
                        found = Some((score, k));
                    }
                }
            }
        }
        let Some((score, k)) = found else { continue };
        let gain = score - parent_score;
        if gain > tolerance && best.is_none_or(|b| gain > b.2) {
            let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            best = Some((f, threshold, gain, k));
        }
    }
    let (feature, threshold, gain, k) = best?;
    // Children keep the parent's sample order for determinism.
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| x.get(i, feature) <= threshold);
    debug_assert_eq!(left.len(), k);
    Some(BestSplit {
        feature,
        threshold,
        gain,
        left,
        right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn splits_a_step_function_at_the_midpoint() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let y = [0.0, 0.0, 10.0, 10.0];
        let t = Tree::fit(&x, TreeTarget::Values(&y), &[0, 1, 2, 3], &TreeParams::default(), &mut rng());
        match &t.nodes[0] {
            Node::Split { threshold, gain, .. } => {
                assert_eq!(*threshold, 2.5);
                // SSE 100 before, 0 after.
                assert!((gain - 100.0).abs() < 1e-9);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(t.predict_row(&[0.0]), &[0.0]);
        assert_eq!(t.predict_row(&[3.2]), &[10.0]);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn gini_tree_shatters_consistent_data() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.2]]).unwrap();
        let labels = [0, 1, 1, 0, 2];
        let t = Tree::fit(
            &x,
            TreeTarget::Classes { labels: &labels, n_classes: 4 },
            &[0, 1, 2, 3, 4],
            &TreeParams::default(),
            &mut rng(),
        );
        for (i, &l) in labels.iter().enumerate() {
            let p = t.predict_row(x.row(i));
            assert_eq!(p[l], 1.0);
        }
    }

    #[test]
    fn depth_limit_and_leaf_size_are_respected() {
        let rows: Vec<[f64; 1]> = (0..32).map(|i| [i as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..32).map(|i| (i * i) as f64).collect();
        let idx: Vec<usize> = (0..32).collect();
        let p = TreeParams {
            max_depth: Some(3),
            ..TreeParams::default()
        };
        assert!(Tree::fit(&x, TreeTarget::Values(&y), &idx, &p, &mut rng()).depth() <= 3);
        let p = TreeParams {
            min_samples_leaf: 8,
            ..TreeParams::default()
        };
        let t = Tree::fit(&x, TreeTarget::Values(&y), &idx, &p, &mut rng());
        let mut leaf_counts = std::collections::BTreeMap::new();
        for i in 0..32 {
            *leaf_counts.entry(t.leaf_index(x.row(i))).or_insert(0) += 1;
        }
        assert!(leaf_counts.values().all(|&c| c >= 8));
    }

    #[test]
    fn constant_target_is_a_single_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let t = Tree::fit(&x, TreeTarget::Values(&[5.0; 3]), &[0, 1, 2], &TreeParams::default(), &mut rng());
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[100.0]), &[5.0]);
    }
}
