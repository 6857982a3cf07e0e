//! Dimension-constrained power-law identification.
//!
//! The model is
//!
//! ```text
//! y = w0 · P^w1 · V^w2 · ρ^w3 · C_p^w4 · k^w5 · (T_m − T0)^w6
//! ```
//!
//! with `y` a length. Unit consistency in mass, length, time and
//! temperature gives four linear equations `C·w = (0, 1, 0, 0)` on the six
//! exponents, leaving a two-dimensional affine family
//! `w = w_particular + B·z`. The fit works on `(ln w0, z)` directly, so
//! every solution satisfies the constraints up to rounding:
//!
//! 1. closed-form least squares in log space gives the initializer;
//! 2. a Levenberg–Marquardt refinement minimizes the squared error in the
//!    original space from several seeded starts around it, keeping the best.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::featurize::Target;
use crate::materials::Registry;

/// Exponents of a quantity over the base units mass, length, time and
/// temperature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionVector {
    pub mass: i32,
    pub length: i32,
    pub time: i32,
    pub temperature: i32,
}

impl DimensionVector {
    pub const fn new(mass: i32, length: i32, time: i32, temperature: i32) -> Self {
        DimensionVector {
            mass,
            length,
            time,
            temperature,
        }
    }

    pub fn as_array(self) -> [i32; 4] {
        [self.mass, self.length, self.time, self.temperature]
    }
}

/// Covariate names, in exponent order.
pub const COVARIATES: [&str; 6] = ["P", "V", "rho", "Cp", "k", "Tm-T0"];

/// Dimensions of the covariates, in exponent order.
pub const COVARIATE_DIMENSIONS: [DimensionVector; 6] = [
    DimensionVector::new(1, 2, -3, 0),   // power, W
    DimensionVector::new(0, 1, -1, 0),   // speed, m/s
    DimensionVector::new(1, -3, 0, 0),   // density, kg/m³
    DimensionVector::new(0, 2, -2, -1),  // specific heat, J/(kg·K)
    DimensionVector::new(1, 1, -3, -1),  // conductivity, W/(m·K)
    DimensionVector::new(0, 0, 0, 1),    // temperature difference, K
];

/// Meltpool depth, width and length are all lengths.
pub const TARGET_DIMENSION: DimensionVector = DimensionVector::new(0, 1, 0, 0);

type Mat4x6 = SMatrix<f64, 4, 6>;
type Vec6 = SVector<f64, 6>;

/// The four unit-balance equations and their solution set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    /// Rows: mass, length, time, temperature. Columns: w1..w6.
    pub matrix: [[i32; 6]; 4],
    pub rhs: [f64; 4],
    /// Minimum-norm solution of `matrix · w = rhs`.
    pub particular: [f64; 6],
    /// Orthonormal basis of the null space, one basis vector per entry.
    pub null_basis: [[f64; 6]; 2],
    pub rank: usize,
}

impl ConstraintSystem {
    #[cfg(test)]
    fn matrix_f64(&self) -> Mat4x6 {
        Mat4x6::from_fn(|i, j| f64::from(self.matrix[i][j]))
    }

    /// `matrix · w − rhs`.
    pub fn residual(&self, w: &[f64; 6]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..6).map(|j| f64::from(self.matrix[i][j]) * w[j]).sum::<f64>() - self.rhs[i];
        }
        out
    }

    pub fn residual_inf(&self, w: &[f64; 6]) -> f64 {
        self.residual(w).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn residual_l2(&self, w: &[f64; 6]) -> f64 {
        self.residual(w).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Exponents for free coordinates `z`.
    pub fn exponents(&self, z: [f64; 2]) -> [f64; 6] {
        let mut w = self.particular;
        for (j, wj) in w.iter_mut().enumerate() {
            *wj += self.null_basis[0][j] * z[0] + self.null_basis[1][j] * z[1];
        }
        w
    }

    /// Projects exponents onto the free coordinates.
    pub fn coordinates(&self, w: &[f64; 6]) -> [f64; 2] {
        let mut z = [0.0; 2];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = (0..6)
                .map(|j| self.null_basis[k][j] * (w[j] - self.particular[j]))
                .sum();
        }
        z
    }
}

/// Builds the unit-balance system from [`COVARIATE_DIMENSIONS`].
pub fn build_constraints() -> ConstraintSystem {
    let mut matrix = [[0i32; 6]; 4];
    for (j, d) in COVARIATE_DIMENSIONS.iter().enumerate() {
        for (i, e) in d.as_array().into_iter().enumerate() {
            matrix[i][j] = e;
        }
    }
    let rhs_arr = TARGET_DIMENSION.as_array().map(f64::from);

    let c = Mat4x6::from_fn(|i, j| f64::from(matrix[i][j]));
    let rank = c.svd(false, false).rank(1e-10);
    let cct_inv = (c * c.transpose())
        .try_inverse()
        .expect("dimension matrix has full row rank");
    let pinv = c.transpose() * cct_inv;
    let particular = pinv * SVector::<f64, 4>::from(rhs_arr);
    let projector = SMatrix::<f64, 6, 6>::identity() - pinv * c;

    // Gram-Schmidt over the projected unit vectors gives a basis that does
    // not depend on an eigen-solver's sign conventions.
    let mut basis: Vec<Vec6> = Vec::with_capacity(2);
    for j in 0..6 {
        let mut v = projector.column(j).into_owned();
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        if basis.len() == 2 {
            break;
        }
    }
    let to_arr = |v: &Vec6| -> [f64; 6] { std::array::from_fn(|i| v[i]) };
    ConstraintSystem {
        matrix,
        rhs: rhs_arr,
        particular: to_arr(&particular),
        null_basis: [to_arr(&basis[0]), to_arr(&basis[1])],
        rank,
    }
}

/// Identified power law. Serializes as
/// `{w0, w1, …, w6, r2, constraint_residual, low_confidence}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawModel {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w6: f64,
    /// Training R² in the original space.
    pub r2: f64,
    /// ‖C·w − rhs‖₂.
    pub constraint_residual: f64,
    /// Set when the data holds fewer than two distinct materials, so the
    /// material exponents are fixed by the constraints alone.
    #[serde(default)]
    pub low_confidence: bool,
}

impl PowerLawModel {
    pub fn from_parts(w0: f64, w: [f64; 6]) -> Self {
        let constraint_residual = build_constraints().residual_l2(&w);
        PowerLawModel {
            w0,
            w1: w[0],
            w2: w[1],
            w3: w[2],
            w4: w[3],
            w5: w[4],
            w6: w[5],
            r2: f64::NAN,
            constraint_residual,
            low_confidence: false,
        }
    }

    pub fn exponents(&self) -> [f64; 6] {
        [self.w1, self.w2, self.w3, self.w4, self.w5, self.w6]
    }

    /// Human-readable form, e.g. `D = 3.70 × 10^5 × P^0.51 V^-0.46 …`.
    pub fn render(&self, lhs: &str) -> String {
        let exp10 = if self.w0 > 0.0 { self.w0.log10().floor() as i32 } else { 0 };
        let mantissa = self.w0 / 10f64.powi(exp10);
        let names = ["P", "V", "ρ", "C_p", "k", "(T_m - T_0)"];
        let terms: Vec<String> = names
            .iter()
            .zip(self.exponents())
            .map(|(n, e)| format!("{n}^{e:.2}"))
            .collect();
        format!("{lhs} = {mantissa:.2} × 10^{exp10} × {}", terms.join(" "))
    }
}

/// Knobs of [`fit_power_law`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction.
    pub relative_tolerance: f64,
    /// Standard deviation of the start perturbation in free coordinates.
    pub start_spread: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 8,
            seed: 0,
            max_iterations: 500,
            relative_tolerance: 1e-10,
            start_spread: 0.1,
        }
    }
}

/// A fitted model plus solver bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawFit {
    pub model: PowerLawModel,
    /// Original-space objective at the log-space initializer.
    pub initial_objective: f64,
    /// Objective after each accepted step of the winning start, starting
    /// with its initial value.
    pub history: Vec<f64>,
    /// Final objective of every start.
    pub start_objectives: Vec<f64>,
    pub winning_start: usize,
    /// Log-space parameters `(ln w0, z1, z2)` of the initializer.
    pub log_initializer: [f64; 3],
}

fn validate(x: &[[f64; 6]], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} covariate rows vs {} targets", x.len(), y.len())));
    }
    if x.len() < 10 {
        return Err(Error::Argument(format!("need at least 10 samples, got {}", x.len())));
    }
    for (i, (row, t)) in x.iter().zip(y).enumerate() {
        if let Some(j) = row.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "sample {i}: covariate {} = {} is not positive",
                COVARIATES[j], row[j]
            )));
        }
        if !(*t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("sample {i}: target {t} is not positive")));
        }
    }
    Ok(())
}

/// Log-space design for one problem: `ln y ≈ c + offset + g·z`.
struct Reduced {
    y: Vec<f64>,
    offset: Vec<f64>,
    g: Vec<[f64; 2]>,
}

impl Reduced {
    fn new(sys: &ConstraintSystem, x: &[[f64; 6]], y: &[f64]) -> Self {
        let mut offset = Vec::with_capacity(x.len());
        let mut g = Vec::with_capacity(x.len());
        for row in x {
            let u: [f64; 6] = row.map(f64::ln);
            offset.push((0..6).map(|j| sys.particular[j] * u[j]).sum());
            g.push([
                (0..6).map(|j| sys.null_basis[0][j] * u[j]).sum(),
                (0..6).map(|j| sys.null_basis[1][j] * u[j]).sum(),
            ]);
        }
        Reduced {
            y: y.to_vec(),
            offset,
            g,
        }
    }

    fn predict(&self, theta: &Vector3<f64>, i: usize) -> f64 {
        (theta[0] + self.offset[i] + theta[1] * self.g[i][0] + theta[2] * self.g[i][1]).exp()
    }

    fn objective(&self, theta: &Vector3<f64>) -> f64 {
        (0..self.y.len())
            .map(|i| (self.y[i] - self.predict(theta, i)).powi(2))
            .sum()
    }

    /// Closed-form constrained least squares on `ln y`.
    fn log_fit(&self) -> Result<Vector3<f64>> {
        let n = self.y.len();
        // Identifiability: the two free coordinates must vary independently.
        let mean = [0, 1].map(|k| self.g.iter().map(|g| g[k]).sum::<f64>() / n as f64);
        let centered = DMatrix::from_fn(n, 2, |i, k| self.g[i][k] - mean[k]);
        let norms = [0, 1].map(|k| centered.column(k).norm());
        if norms.iter().any(|&v| v < 1e-12) {
            return Err(Error::Identifiability(
                "covariates do not vary enough; collect data over several process settings and materials".into(),
            ));
        }
        let scaled = DMatrix::from_fn(n, 2, |i, k| centered[(i, k)] / norms[k]);
        let sv = scaled.singular_values();
        if sv.min() / sv.max() < 1e-8 {
            return Err(Error::Identifiability(
                "the two free exponent directions are collinear in this data; collect data over several process settings and materials".into(),
            ));
        }

        let a = DMatrix::from_fn(n, 3, |i, k| match k {
            0 => 1.0,
            _ => self.g[i][k - 1],
        });
        let b = DVector::from_fn(n, |i, _| self.y[i].ln() - self.offset[i]);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Vector3::new(sol[0], sol[1], sol[2]))
    }

    /// Best multiplier for fixed exponents.
    fn best_intercept(&self, z: [f64; 2]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.y.len() {
            let f = (self.offset[i] + z[0] * self.g[i][0] + z[1] * self.g[i][1]).exp();
            num += self.y[i] * f;
            den += f * f;
        }
        (num / den).ln()
    }

    /// Levenberg–Marquardt on the original-space squared error. Only
    /// improving steps are accepted, so the returned history is
    /// non-increasing.
    fn refine(&self, start: Vector3<f64>, cfg: &FitConfig) -> (Vector3<f64>, Vec<f64>) {
        let mut theta = start;
        let mut obj = self.objective(&theta);
        let mut history = vec![obj];
        let mut lambda = 1e-3;
        for _ in 0..cfg.max_iterations {
            let mut jtj = Matrix3::<f64>::zeros();
            let mut jtr = Vector3::<f64>::zeros();
            for i in 0..self.y.len() {
                let pred = self.predict(&theta, i);
                let grad = Vector3::new(pred, pred * self.g[i][0], pred * self.g[i][1]);
                jtj += grad * grad.transpose();
                jtr += grad * (self.y[i] - pred);
            }
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            };
            let candidate = theta + step;
            let cand_obj = self.objective(&candidate);
            if cand_obj.is_finite() && cand_obj < obj {
                let decrease = (obj - cand_obj) / obj;
                theta = candidate;
                obj = cand_obj;
                history.push(obj);
                lambda = (lambda / 10.0).max(1e-15);
                if decrease < cfg.relative_tolerance {
                    break;
                }
            } else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
            }
        }
        (theta, history)
    }
}

/// Sorts samples into a canonical order so that results do not depend on
/// the caller's row order.
fn canonical_order(x: &[[f64; 6]], y: &[f64]) -> (Vec<[f64; 6]>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| {
        y[a].total_cmp(&y[b]).then_with(|| {
            x[a].iter()
                .zip(&x[b])
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    (idx.iter().map(|&i| x[i]).collect(), idx.iter().map(|&i| y[i]).collect())
}

fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Fits the constrained power law. Columns of `x` are
/// `P, V, ρ, C_p, k, T_m − T0` in SI units; `y` is in meters.
pub fn fit_power_law(x: &[[f64; 6]], y: &[f64], cfg: &FitConfig) -> Result<PowerLawModel> {
    fit_power_law_detailed(x, y, cfg).map(|f| f.model)
}

pub fn fit_power_law_detailed(x: &[[f64; 6]], y: &[f64], cfg: &FitConfig) -> Result<PowerLawFit> {
    validate(x, y)?;
    if cfg.starts == 0 {
        return Err(Error::Argument("need at least one start".into()));
    }
    let (x, y) = canonical_order(x, y);
    let sys = build_constraints();
    let reduced = Reduced::new(&sys, &x, &y);
    let init = reduced.log_fit()?;
    let initial_objective = reduced.objective(&init);

    let starts: Vec<Vector3<f64>> = (0..cfg.starts)
        .map(|k| {
            if k == 0 {
                return init;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let normal = Normal::new(0.0, cfg.start_spread.max(0.0)).expect("finite spread");
            let z = [init[1] + normal.sample(&mut rng), init[2] + normal.sample(&mut rng)];
            Vector3::new(reduced.best_intercept(z), z[0], z[1])
        })
        .collect();
    let runs: Vec<(Vector3<f64>, Vec<f64>)> =
        starts.par_iter().map(|s| reduced.refine(*s, cfg)).collect();

    let mut winner = 0;
    for (k, run) in runs.iter().enumerate() {
        let best = *runs[winner].1.last().unwrap();
        let cur = *run.1.last().unwrap();
        if cur < best {
            winner = k;
        }
    }
    let (theta, history) = runs[winner].clone();
    let w = sys.exponents([theta[1], theta[2]]);
    let mut model = PowerLawModel::from_parts(theta[0].exp(), w);
    model.constraint_residual = sys.residual_l2(&w);
    let pred: Vec<f64> = (0..y.len()).map(|i| reduced.predict(&theta, i)).collect();
    model.r2 = r_squared(&y, &pred);
    model.low_confidence = distinct_materials(&x) < 2;

    Ok(PowerLawFit {
        model,
        initial_objective,
        start_objectives: runs.iter().map(|r| *r.1.last().unwrap()).collect(),
        history,
        winning_start: winner,
        log_initializer: [init[0], init[1], init[2]],
    })
}

fn distinct_materials(x: &[[f64; 6]]) -> usize {
    let mut keys: Vec<[u64; 4]> = x
        .iter()
        .map(|r| [r[2].to_bits(), r[3].to_bits(), r[4].to_bits(), r[5].to_bits()])
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// `w0 · Π x_j^{w_j}` for each row.
pub fn evaluate_power_law(model: &PowerLawModel, x: &[[f64; 6]]) -> Result<Vec<f64>> {
    let w = model.exponents();
    x.iter()
        .enumerate()
        .map(|(i, row)| {
            if let Some(j) = row.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::Domain(format!(
                    "row {i}: covariate {} = {} is not positive",
                    COVARIATES[j], row[j]
                )));
            }
            Ok(model.w0 * row.iter().zip(w).map(|(v, e)| v.powf(e)).product::<f64>())
        })
        .collect()
}

/// Extracts `(covariates, target)` for the geometry `target` from records
/// with that label and a material with thermal data. Also returns the
/// dataset index of each sample.
pub fn covariates_from_dataset(
    ds: &Dataset,
    target: Target,
    registry: &Registry,
    ambient_temp: f64,
) -> Result<(Vec<[f64; 6]>, Vec<f64>, Vec<usize>)> {
    if target.is_classification() {
        return Err(Error::Argument("power-law identification needs a geometry target".into()));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut idx = Vec::new();
    for (i, r) in ds.records.iter().enumerate() {
        let label = match target {
            Target::Depth => r.depth,
            Target::Width => r.width,
            Target::Length => r.length,
            Target::DefectClass => None,
        };
        let Some(label) = label else { continue };
        let Some(t) = registry.lookup_material(&r.material)?.thermal else {
            continue;
        };
        x.push([
            r.power,
            r.velocity,
            t.density,
            t.specific_heat,
            t.conductivity,
            t.melting_temp - ambient_temp,
        ]);
        y.push(label);
        idx.push(i);
    }
    Ok((x, y, idx))
}
