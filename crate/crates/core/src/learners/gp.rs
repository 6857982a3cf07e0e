//! Exact Gaussian-process regression with an RBF kernel.
//!
//! `k(x, x') = σ_f² · exp(−‖x − x'‖² / (2ℓ²))`, plus `noise` on the
//! diagonal. The target is standardized before fitting.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::Hyperparams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Diagonal jitter tried in order when the kernel matrix is not
/// numerically positive definite.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub x_train: Matrix,
    /// `(K + σ²I)⁻¹ ỹ` for the standardized target `ỹ`.
    pub weights: Vec<f64>,
    /// Lower Cholesky factor of the regularized kernel matrix.
    pub factor: Matrix,
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise: f64,
    /// Jitter that made the factorization succeed (0 if none was needed).
    pub jitter: f64,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn rbf(a: &[f64], b: &[f64], length_scale: f64, signal_variance: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    signal_variance * (-d2 / (2.0 * length_scale * length_scale)).exp()
}

pub fn fit(x: &Matrix, y: &[f64], hp: &Hyperparams) -> Result<GpModel> {
    let n = x.rows();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let kernel = DMatrix::from_fn(n, n, |i, j| {
        rbf(x.row(i), x.row(j), hp.length_scale, hp.signal_variance)
    });
    let ladder: Vec<f64> = if hp.noise > 0.0 {
        std::iter::once(0.0).chain(JITTER_LADDER).collect()
    } else {
        JITTER_LADDER.to_vec()
    };
    let mut chol: Option<(Cholesky<f64, Dyn>, f64)> = None;
    for &jitter in &ladder {
        let mut k = kernel.clone();
        for i in 0..n {
            k[(i, i)] += hp.noise + jitter;
        }
        if let Some(c) = k.cholesky() {
            chol = Some((c, jitter));
            break;
        }
    }
    let Some((chol, jitter)) = chol else {
        return Err(Error::Numerical(format!(
            "kernel matrix is not positive definite even with jitter {}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )));
    };
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / scale));
    let weights = chol.solve(&ys);
    let l = chol.l();
    let factor = Matrix::from_vec(n, n, (0..n * n).map(|k| l[(k / n, k % n)]).collect())?;
    Ok(GpModel {
        x_train: x.clone(),
        weights: weights.iter().copied().collect(),
        factor,
        length_scale: hp.length_scale,
        signal_variance: hp.signal_variance,
        noise: hp.noise,
        jitter,
        y_mean: mean,
        y_scale: scale,
    })
}

impl GpModel {
    fn cross(&self, row: &[f64]) -> Vec<f64> {
        self.x_train
            .iter_rows()
            .map(|r| rbf(r, row, self.length_scale, self.signal_variance))
            .collect()
    }

    /// Posterior mean.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let k = self.cross(row);
        self.y_mean + self.y_scale * k.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Posterior variance of the latent function, in target units squared.
    pub fn predict_variance(&self, row: &[f64]) -> f64 {
        let n = self.weights.len();
        let k = self.cross(row);
        // Forward substitution L v = k.
        let mut v = vec![0.0; n];
        for i in 0..n {
            let mut s = k[i];
            for (j, vj) in v.iter().enumerate().take(i) {
                s -= self.factor.get(i, j) * vj;
            }
            v[i] = s / self.factor.get(i, i);
        }
        let var = self.signal_variance - v.iter().map(|a| a * a).sum::<f64>();
        var.max(0.0) * self.y_scale * self.y_scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 2]> = (0..12).map(|i| [i as f64 * 0.3, (i as f64 * 0.7).sin()]).collect();
        let y = rows.iter().map(|r| r[0].cos() + r[1]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn noiseless_gp_interpolates() {
        let (x, y) = data();
        let hp = Hyperparams {
            noise: 0.0,
            ..Hyperparams::default()
        };
        let m = fit(&x, &y, &hp).unwrap();
        for (i, t) in y.iter().enumerate() {
            assert!((m.predict(x.row(i)) - t).abs() < 1e-6);
            assert!(m.predict_variance(x.row(i)) < 1e-6);
        }
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [2.0]]).unwrap();
        let hp = Hyperparams {
            noise: 0.0,
            ..Hyperparams::default()
        };
        let m = fit(&x, &[1.0, 1.0, 3.0], &hp).unwrap();
        assert!(m.jitter > 0.0);
        assert!((m.predict(&[1.0]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn far_from_data_reverts_to_mean() {
        let (x, y) = data();
        let m = fit(&x, &y, &Hyperparams::default()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.predict(&[1e3, 1e3]) - mean).abs() < 1e-12);
        let var = m.predict_variance(&[1e3, 1e3]);
        assert!((var - m.y_scale * m.y_scale).abs() < 1e-9);
    }
}
