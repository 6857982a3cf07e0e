//! Multinomial logistic regression with an L2 penalty on the weights.
//!
//! Minimizes `C · Σ_i −log p(y_i | x_i) + ½‖W‖²` (intercepts unpenalized)
//! by gradient descent with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `weights[k]` holds the coefficients of class `k`.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

fn softmax(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    scores.iter_mut().for_each(|s| *s /= total);
}

impl LogisticModel {
    fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut s = self.scores(row);
        softmax(&mut s);
        s
    }
}

/// Objective divided by `n`, and its gradient in the same layout as
/// `params` (`k·d` weights then `k` intercepts).
fn objective(x: &Matrix, labels: &[usize], k: usize, c: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let n = x.rows();
    let d = x.cols();
    let (w, b) = params.split_at(k * d);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut s = vec![0.0; k];
    for (i, row) in x.iter_rows().enumerate() {
        for c_ in 0..k {
            s[c_] = b[c_] + w[c_ * d..(c_ + 1) * d].iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
        }
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - s[labels[i]];
        for c_ in 0..k {
            let p = (s[c_] - lse).exp();
            let r = p - f64::from(u8::from(labels[i] == c_));
            let gw = &mut grad[c_ * d..(c_ + 1) * d];
            for (g, v) in gw.iter_mut().zip(row) {
                *g += c * r * v;
            }
            grad[k * d + c_] += c * r;
        }
    }
    let mut penalty = 0.0;
    for (g, wi) in grad[..k * d].iter_mut().zip(w) {
        *g += wi;
        penalty += wi * wi;
    }
    let nf = n as f64;
    grad.iter_mut().for_each(|g| *g /= nf);
    (c * loss + 0.5 * penalty) / nf
}

pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, c: f64, max_iter: usize) -> LogisticModel {
    let d = x.cols();
    let k = n_classes;
    let mut params = vec![0.0; k * d + k];
    let mut grad = vec![0.0; params.len()];
    let mut f = objective(x, labels, k, c, &params, &mut grad);
    let mut step = 1.0;
    let mut trial = vec![0.0; params.len()];
    let mut trial_grad = vec![0.0; params.len()];
    for _ in 0..max_iter {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < 1e-8 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, p), g) in trial.iter_mut().zip(&params).zip(&grad) {
                *t = p - step * g;
            }
            let ft = objective(x, labels, k, c, &trial, &mut trial_grad);
            if ft <= f - 1e-4 * step * gnorm2 {
                std::mem::swap(&mut params, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                let rel = (f - ft) / f.abs().max(1e-300);
                f = ft;
                step *= 2.0;
                accepted = true;
                if rel < 1e-12 {
                    return unpack(&params, k, d);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    unpack(&params, k, d)
}

fn unpack(params: &[f64], k: usize, d: usize) -> LogisticModel {
    LogisticModel {
        weights: (0..k).map(|c| params[c * d..(c + 1) * d].to_vec()).collect(),
        intercepts: params[k * d..].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_two_class_data_is_fit_exactly() {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64 / 40.0;
                if i % 2 == 0 {
                    [t, t + 0.5]
                } else {
                    [t + 0.5, t]
                }
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| if i % 2 == 0 { 1 } else { 3 }).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit(&x, &labels, 4, 1.0, 2000);
        for (row, &l) in rows.iter().zip(&labels) {
            let p = m.predict_proba(row);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(super::super::argmax(&p), l);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = Matrix::from_rows(&[[0.3, -1.0], [1.2, 0.4], [-0.7, 0.9], [0.1, 0.2]]).unwrap();
        let labels = [0, 2, 1, 2];
        let params: Vec<f64> = (0..12).map(|i| ((i * 37) % 11) as f64 / 10.0 - 0.5).collect();
        let mut g = vec![0.0; 12];
        objective(&x, &labels, 4, 3.0, &params, &mut g);
        let mut scratch = vec![0.0; 12];
        for j in 0..12 {
            let h = 1e-6;
            let mut p = params.clone();
            p[j] += h;
            let up = objective(&x, &labels, 4, 3.0, &p, &mut scratch);
            p[j] -= 2.0 * h;
            let down = objective(&x, &labels, 4, 3.0, &p, &mut scratch);
            assert!(((up - down) / (2.0 * h) - g[j]).abs() < 1e-7);
        }
    }
}
