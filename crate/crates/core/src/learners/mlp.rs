//! Fully connected network with ReLU hidden layers.
//!
//! Regression uses one linear output trained on the standardized target
//! with loss `½·mean((ŷ − y)²)`. Classification uses a softmax output with
//! mean cross-entropy. Both add `alpha · Σ W²` over weights (not biases).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Hyperparams, Optimizer, N_CLASSES};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Layer sizes plus all parameters in one flat vector. Layer `l` stores its
/// `sizes[l+1] × sizes[l]` weights row-major, then its `sizes[l+1]` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub enum MlpTargets<'a> {
    Values(&'a [f64]),
    Classes(&'a [usize]),
}

impl MlpTargets<'_> {
    fn len(&self) -> usize {
        match self {
            MlpTargets::Values(v) => v.len(),
            MlpTargets::Classes(c) => c.len(),
        }
    }
}

impl MlpNet {
    /// Glorot-uniform initialization.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output layers");
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.random_range(-bound..bound));
            }
        }
        MlpNet {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// True for entries of [`MlpNet::params`] that are weights.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for w in self.sizes.windows(2) {
            mask.extend(std::iter::repeat_n(true, w[0] * w[1]));
            mask.extend(std::iter::repeat_n(false, w[1]));
        }
        mask
    }

    /// Raw output (pre-softmax for classification).
    pub fn forward(&self, row: &[f64]) -> Vec<f64> {
        let mut a = row.to_vec();
        for l in 0..self.n_layers() {
            a = self.layer(l, &a);
        }
        a
    }

    fn layer(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let (wo, bo) = self.offsets(l);
        let w = &self.params[wo..wo + n_in * n_out];
        let b = &self.params[bo..bo + n_out];
        let hidden = l + 1 < self.n_layers();
        (0..n_out)
            .map(|o| {
                let z = b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                if hidden {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in v.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    v.iter_mut().for_each(|s| *s /= total);
}

/// Loss and gradient on `rows` of `x`; gradient written into `grad`.
fn loss_grad_rows(
    net: &MlpNet,
    x: &Matrix,
    targets: MlpTargets<'_>,
    rows: &[usize],
    alpha: f64,
    grad: &mut [f64],
) -> f64 {
    let n_layers = net.n_layers();
    let offsets: Vec<(usize, usize)> = (0..n_layers).map(|l| net.offsets(l)).collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let m = rows.len() as f64;
    let mut loss = 0.0;
    let mut acts: Vec<Vec<f64>> = net.sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut delta: Vec<f64> = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    for &i in rows {
        acts[0].copy_from_slice(x.row(i));
        for l in 0..n_layers {
            let next = net.layer(l, &acts[l]);
            acts[l + 1] = next;
        }
        let out = &acts[n_layers];
        delta.clear();
        match targets {
            MlpTargets::Values(y) => {
                let r = out[0] - y[i];
                loss += 0.5 * r * r / m;
                delta.push(r / m);
            }
            MlpTargets::Classes(labels) => {
                let mut p = out.clone();
                softmax_in_place(&mut p);
                loss -= p[labels[i]].max(1e-300).ln() / m;
                for (k, pk) in p.iter().enumerate() {
                    delta.push((pk - f64::from(u8::from(labels[i] == k))) / m);
                }
            }
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let (wo, bo) = offsets[l];
            let a_prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[wo + o * n_in..wo + (o + 1) * n_in];
                for (g, a) in gw.iter_mut().zip(a_prev) {
                    *g += d * a;
                }
                grad[bo + o] += d;
            }
            if l > 0 {
                prev.clear();
                prev.resize(n_in, 0.0);
                let w = &net.params[wo..wo + n_in * n_out];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wv;
                    }
                }
                for (p, a) in prev.iter_mut().zip(a_prev) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
    }
    if alpha != 0.0 {
        for &(wo, bo) in &offsets {
            for j in wo..bo {
                let w = net.params[j];
                loss += alpha * w * w;
                grad[j] += 2.0 * alpha * w;
            }
        }
    }
    loss
}

/// Penalized loss over every row of `x` and its analytic gradient, laid
/// out like [`MlpNet::params`].
pub fn mlp_loss_gradient(net: &MlpNet, x: &Matrix, targets: MlpTargets<'_>, alpha: f64) -> (f64, Vec<f64>) {
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut grad = vec![0.0; net.params.len()];
    let loss = loss_grad_rows(net, x, targets, &rows, alpha, &mut grad);
    (loss, grad)
}

/// Penalized loss over every row of `x`.
pub fn mlp_loss(net: &MlpNet, x: &Matrix, targets: MlpTargets<'_>, alpha: f64) -> f64 {
    mlp_loss_gradient(net, x, targets, alpha).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub net: MlpNet,
    /// Regression outputs are `y_mean + y_scale · net`.
    pub y_mean: f64,
    pub y_scale: f64,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

impl MlpModel {
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        self.y_mean + self.y_scale * self.net.forward(row)[0]
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut out = self.net.forward(row);
        softmax_in_place(&mut out);
        out
    }
}

/// Epochs without a `TOLERANCE` improvement before training stops.
const PATIENCE: usize = 10;
const TOLERANCE: f64 = 1e-5;

pub fn fit(x: &Matrix, targets: MlpTargets<'_>, hp: &Hyperparams, seed: u64) -> Result<MlpModel> {
    let n = targets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (out_dim, y_mean, y_scale, scaled);
    match targets {
        MlpTargets::Values(y) => {
            let mean = y.iter().sum::<f64>() / n as f64;
            let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let scale = if sd > 0.0 {
                sd
            } else if mean != 0.0 {
                mean.abs()
            } else {
                1.0
            };
            scaled = y.iter().map(|v| (v - mean) / scale).collect::<Vec<f64>>();
            out_dim = 1;
            y_mean = mean;
            y_scale = scale;
        }
        MlpTargets::Classes(_) => {
            scaled = Vec::new();
            out_dim = N_CLASSES;
            y_mean = 0.0;
            y_scale = 1.0;
        }
    }
    let train_targets = match targets {
        MlpTargets::Values(_) => MlpTargets::Values(&scaled),
        c => c,
    };
    let mut sizes = vec![x.cols()];
    sizes.extend(hp.hidden_layers);
    sizes.push(out_dim);
    let mut net = MlpNet::new(&sizes, &mut rng);

    let batch = match hp.optimizer {
        Optimizer::Gd => n,
        Optimizer::Adam => hp.batch_size.unwrap_or(200).clamp(1, n),
    };
    let p = net.params.len();
    let mut grad = vec![0.0; p];
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(hp.max_iter);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..hp.max_iter {
        if hp.optimizer == Optimizer::Adam {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let loss = loss_grad_rows(&net, x, train_targets, chunk, hp.alpha, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Numerical("MLP loss diverged; lower learning_rate".into()));
            }
            epoch_loss += loss * chunk.len() as f64;
            match hp.optimizer {
                Optimizer::Gd => {
                    for (w, g) in net.params.iter_mut().zip(&grad) {
                        *w -= hp.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    t += 1;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for j in 0..p {
                        m1[j] = beta1 * m1[j] + (1.0 - beta1) * grad[j];
                        m2[j] = beta2 * m2[j] + (1.0 - beta2) * grad[j] * grad[j];
                        net.params[j] -= hp.learning_rate * (m1[j] / c1) / ((m2[j] / c2).sqrt() + eps);
                    }
                }
            }
        }
        let epoch_loss = epoch_loss / n as f64;
        loss_curve.push(epoch_loss);
        if epoch_loss > best - TOLERANCE {
            stale += 1;
            if stale > PATIENCE {
                break;
            }
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
    }
    Ok(MlpModel {
        net,
        y_mean,
        y_scale,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(net: &MlpNet, x: &Matrix, t: MlpTargets<'_>, alpha: f64) -> f64 {
        let (_, g) = mlp_loss_gradient(net, x, t, alpha);
        let h = 1e-5;
        let mut fd = vec![0.0; g.len()];
        let mut probe = net.clone();
        for j in 0..g.len() {
            let orig = probe.params[j];
            probe.params[j] = orig + h;
            let up = mlp_loss(&probe, x, t, alpha);
            probe.params[j] = orig - h;
            let down = mlp_loss(&probe, x, t, alpha);
            probe.params[j] = orig;
            fd[j] = (up - down) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        diff / scale
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_rows(&[[0.5, -1.0], [0.2, 0.8], [-1.1, 0.3]]).unwrap();
        let net = MlpNet::new(&[2, 4, 2], &mut rng);
        assert!(fd_check(&net, &x, MlpTargets::Classes(&[0, 1, 1]), 0.01) < 1e-5);
        let net = MlpNet::new(&[2, 5, 3, 1], &mut rng);
        assert!(fd_check(&net, &x, MlpTargets::Values(&[0.3, -0.2, 1.0]), 0.0) < 1e-5);
    }

    #[test]
    fn penalty_gradient_is_two_alpha_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_rows(&[[0.5, -1.0], [0.2, 0.8]]).unwrap();
        let net = MlpNet::new(&[2, 4, 2], &mut rng);
        let t = MlpTargets::Classes(&[1, 0]);
        let (_, g0) = mlp_loss_gradient(&net, &x, t, 0.0);
        let (_, g1) = mlp_loss_gradient(&net, &x, t, 0.3);
        for ((a, b), (w, is_w)) in g0.iter().zip(&g1).zip(net.params.iter().zip(net.weight_mask())) {
            let expected = if is_w { 2.0 * 0.3 * w } else { 0.0 };
            assert!((b - a - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_network_has_zero_penalty_gradient() {
        let net = MlpNet {
            sizes: vec![2, 3, 1],
            params: vec![0.0; 2 * 3 + 3 + 3 + 1],
        };
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let (loss, g) = mlp_loss_gradient(&net, &x, MlpTargets::Values(&[0.0]), 0.5);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn learns_a_smooth_function() {
        let rows: Vec<[f64; 1]> = (0..64).map(|i| [i as f64 / 32.0 - 1.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let hp = Hyperparams {
            hidden_layers: [32, 32, 32],
            learning_rate: 1e-2,
            max_iter: 300,
            batch_size: Some(16),
            ..Hyperparams::default()
        };
        let m = fit(&x, MlpTargets::Values(&y), &hp, 0).unwrap();
        let mse: f64 = rows.iter().zip(&y).map(|(r, t)| (m.predict_value(r) - t).powi(2)).sum::<f64>() / 64.0;
        assert!(mse < 5e-3, "{mse}");
    }
}
