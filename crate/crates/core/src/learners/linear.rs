//! Ridge (closed form) and lasso (coordinate descent). Both leave the
//! intercept unpenalized by working on centered data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(c, x)| c * x).sum::<f64>()
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let mut m = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn centered(x: &Matrix, means: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) - means[j])
}

/// Minimizes `‖y − b − Xβ‖² + λ‖β‖²`.
pub fn ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearModel> {
    let means = column_means(x);
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let xc = centered(x, &means);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let d = x.cols();
    let a = xc.transpose() * &xc + DMatrix::identity(d, d) * lambda;
    let b = xc.transpose() * yc;
    let beta = if d == 0 {
        DVector::zeros(0)
    } else {
        let sv = a.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if hi == 0.0 || lo / hi < 1e-12 {
            return Err(Error::Numerical(format!(
                "ridge normal equations are singular (λ = {lambda}); raise lambda or drop collinear columns"
            )));
        }
        a.cholesky()
            .ok_or_else(|| Error::Numerical("ridge normal equations are not positive definite".into()))?
            .solve(&b)
    };
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel { coef, intercept })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)‖ỹ − Xβ‖² + λ‖β‖₁` where `ỹ` is the standardized
/// target, then maps the coefficients back to the original target scale.
/// Standardizing makes `λ` independent of the target's units.
pub fn lasso(x: &Matrix, y: &[f64], lambda: f64, max_iter: usize) -> Result<LinearModel> {
    let n = x.rows();
    let d = x.cols();
    let means = column_means(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let y_scale = if y_sd > 0.0 { y_sd } else { 1.0 };
    let xc = centered(x, &means);
    let mut r: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    let col_sq: Vec<f64> = (0..d).map(|j| xc.column(j).norm_squared() / n as f64).collect();
    let mut beta = vec![0.0; d];
    let tol = 1e-10;
    let mut converged = d == 0;
    for _ in 0..max_iter {
        let mut max_change: f64 = 0.0;
        let mut max_beta: f64 = 0.0;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let old = beta[j];
            let rho = col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n as f64 + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                let delta = new - old;
                for (ri, xi) in r.iter_mut().zip(col.iter()) {
                    *ri -= xi * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max((new - old).abs());
            max_beta = max_beta.max(new.abs());
        }
        if max_change <= tol * max_beta.max(1e-300) || max_change == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lasso did not converge in {max_iter} sweeps");
    }
    let coef: Vec<f64> = beta.iter().map(|b| b * y_scale).collect();
    let intercept = y_mean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel { coef, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 3]> = (0..30)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin(), (t * 0.11).cos(), ((t * 1.7) % 5.0) - 2.0]
            })
            .collect();
        let y = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 3.0 * r[1] + 0.5 * r[2]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn ridge_without_penalty_recovers_exact_linear_map() {
        let (x, y) = design();
        let m = ridge(&x, &y, 0.0).unwrap();
        for (c, e) in m.coef.iter().zip([2.0, -3.0, 0.5]) {
            assert!((c - e).abs() < 1e-10);
        }
        assert!((m.intercept - 1.5).abs() < 1e-10);
    }

    #[test]
    fn ridge_satisfies_normal_equations() {
        let (x, y) = design();
        let lambda = 0.7;
        let m = ridge(&x, &y, lambda).unwrap();
        let means = column_means(&x);
        let xc = centered(&x, &means);
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
        let beta = DVector::from_vec(m.coef.clone());
        let lhs = (xc.transpose() * &xc + DMatrix::identity(3, 3) * lambda) * beta;
        let rhs = xc.transpose() * yc;
        assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn huge_penalty_predicts_the_mean() {
        let (x, y) = design();
        let m = ridge(&x, &y, 1e14).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(m.coef.iter().all(|c| c.abs() < 1e-10));
        assert!((m.predict(x.row(0)) - mean).abs() < 1e-9);
    }

    #[test]
    fn collinear_without_penalty_is_numerical_error() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(ridge(&x, &[1.0, 2.0, 3.0], 0.0), Err(Error::Numerical(_))));
        assert!(ridge(&x, &[1.0, 2.0, 3.0], 0.1).is_ok());
    }

    #[test]
    fn lasso_zero_penalty_matches_least_squares() {
        let (x, y) = design();
        let m = lasso(&x, &y, 0.0, 100_000).unwrap();
        for (c, e) in m.coef.iter().zip([2.0, -3.0, 0.5]) {
            assert!((c - e).abs() < 1e-6, "{:?}", m.coef);
        }
    }

    #[test]
    fn lasso_large_penalty_zeroes_everything() {
        let (x, y) = design();
        let m = lasso(&x, &y, 10.0, 1000).unwrap();
        assert!(m.coef.iter().all(|&c| c == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn lasso_kkt_conditions_hold() {
        let (x, y) = design();
        let lambda = 0.05;
        let m = lasso(&x, &y, lambda, 100_000).unwrap();
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let resid: Vec<f64> = (0..y.len()).map(|i| (y[i] - m.predict(x.row(i))) / sd).collect();
        let means = column_means(&x);
        for j in 0..3 {
            let g: f64 = (0..y.len()).map(|i| (x.get(i, j) - means[j]) * resid[i]).sum::<f64>() / n;
            if m.coef[j] != 0.0 {
                assert!((g - lambda * m.coef[j].signum()).abs() < 1e-6);
            } else {
                assert!(g.abs() <= lambda + 1e-9);
            }
        }
    }
}
