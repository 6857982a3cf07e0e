//! Supervised learners: linear models, trees and ensembles, a multilayer
//! perceptron and Gaussian-process regression.
//!
//! Every learner goes through [`train`] and returns a [`TrainedModel`],
//! which remembers the column names it was fit on and refuses inputs with a
//! different layout. Models serialize to a versioned JSON document.
//!
//! Trees are insensitive to feature scale; the linear models, the MLP and
//! the GP expect z-scored inputs (see [`crate::data::zscore_fit`]).

pub mod boosting;
pub mod forest;
pub mod gp;
pub mod linear;
pub mod logistic;
pub mod mlp;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DefectClass;
use crate::error::{Error, Result};
use crate::featurize::{FeatureMatrix, Targets};
use crate::matrix::Matrix;

/// Version of the saved-model JSON layout.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Number of columns in [`TrainedModel::predict_proba`] output.
pub const N_CLASSES: usize = DefectClass::COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    Lasso,
    Logistic,
    DecisionTree,
    RandomForest,
    GradientBoosting,
    Mlp,
    GpRegressor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Ridge,
        ModelKind::Lasso,
        ModelKind::Logistic,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::Mlp,
        ModelKind::GpRegressor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::Logistic => "logistic",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::Mlp => "mlp",
            ModelKind::GpRegressor => "gp_regressor",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            ModelKind::Ridge | ModelKind::Lasso | ModelKind::GpRegressor => task == Task::Regression,
            ModelKind::Logistic => task == Task::Classification,
            _ => true,
        }
    }

    /// Whether the learner expects standardized inputs.
    pub fn wants_scaling(self) -> bool {
        !matches!(
            self,
            ModelKind::DecisionTree | ModelKind::RandomForest | ModelKind::GradientBoosting
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let kind = match lower.as_str() {
            "ridge" => ModelKind::Ridge,
            "lasso" => ModelKind::Lasso,
            "logistic" | "lr" => ModelKind::Logistic,
            "decision_tree" | "dt" => ModelKind::DecisionTree,
            "random_forest" | "rf" => ModelKind::RandomForest,
            "gradient_boosting" | "gb" => ModelKind::GradientBoosting,
            "mlp" | "nn" => ModelKind::Mlp,
            "gp_regressor" | "gpr" => ModelKind::GpRegressor,
            _ => {
                return Err(Error::Argument(format!(
                    "unknown model kind `{s}` (expected one of {})",
                    ModelKind::ALL.map(|k| k.name()).join(", ")
                )))
            }
        };
        Ok(kind)
    }
}

impl Task {
    pub fn of(targets: &Targets) -> Task {
        match targets {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification(_) => Task::Classification,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adam on shuffled mini-batches.
    Adam,
    /// Full-batch gradient descent with a fixed step.
    Gd,
}

/// Allowed hidden-layer widths.
pub const MLP_WIDTHS: [usize; 5] = [32, 64, 128, 256, 512];

/// Every tunable knob of every learner. Fields that do not apply to a
/// kind are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Trees in a forest or boosting stages. 1..=500.
    pub n_estimators: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of columns tried per split; `None` uses √d for
    /// classification forests and all columns otherwise.
    pub max_features: Option<f64>,
    pub bootstrap: bool,
    /// Boosting shrinkage or MLP step size.
    pub learning_rate: f64,
    /// Ridge and lasso penalty weight.
    pub lambda: f64,
    /// Inverse logistic regularization strength. 1..=500.
    pub c: f64,
    pub hidden_layers: [usize; 3],
    /// MLP weight penalty `alpha · Σ W²`. 1e-7..=1e-1.
    pub alpha: f64,
    /// Epochs (MLP) or iterations (lasso, logistic).
    pub max_iter: usize,
    pub batch_size: Option<usize>,
    pub optimizer: Optimizer,
    /// RBF kernel length scale.
    pub length_scale: f64,
    /// RBF kernel amplitude σ_f².
    pub signal_variance: f64,
    /// Observation noise variance added to the kernel diagonal.
    pub noise: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            n_estimators: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
            learning_rate: 0.1,
            lambda: 1.0,
            c: 1.0,
            hidden_layers: [64, 32, 64],
            alpha: 1e-4,
            max_iter: 200,
            batch_size: None,
            optimizer: Optimizer::Adam,
            length_scale: 1.0,
            signal_variance: 1.0,
            noise: 1e-2,
        }
    }
}

impl Hyperparams {
    /// Defaults tuned per learner.
    pub fn default_for(kind: ModelKind) -> Self {
        let base = Hyperparams::default();
        match kind {
            ModelKind::GradientBoosting => Hyperparams {
                max_depth: Some(3),
                ..base
            },
            ModelKind::Mlp => Hyperparams {
                learning_rate: 1e-3,
                ..base
            },
            ModelKind::Lasso => Hyperparams {
                lambda: 1e-3,
                max_iter: 10_000,
                ..base
            },
            ModelKind::Logistic => Hyperparams {
                max_iter: 2_000,
                ..base
            },
            _ => base,
        }
    }

    /// Overlays the keys present in `value` on [`Hyperparams::default_for`].
    pub fn from_json(kind: ModelKind, value: &serde_json::Value) -> Result<Self> {
        let mut merged = serde_json::to_value(Hyperparams::default_for(kind))?;
        match (value, &mut merged) {
            (serde_json::Value::Object(src), serde_json::Value::Object(dst)) => {
                for (k, v) in src {
                    dst.insert(k.clone(), v.clone());
                }
            }
            (serde_json::Value::Null, _) => {}
            _ => return Err(Error::Argument("hyperparameters must be a JSON object".into())),
        }
        let hp: Hyperparams = serde_json::from_value(merged)
            .map_err(|e| Error::Argument(format!("hyperparameters: {e}")))?;
        hp.validate(kind)?;
        Ok(hp)
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bad(format!("{name} must be > 0, got {v}"))
            }
        };
        match kind {
            ModelKind::Ridge | ModelKind::Lasso => {
                if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
                    return bad(format!("lambda must be >= 0, got {}", self.lambda));
                }
            }
            ModelKind::Logistic => {
                if !(1.0..=500.0).contains(&self.c) {
                    return bad(format!("c must lie in [1, 500], got {}", self.c));
                }
            }
            ModelKind::DecisionTree | ModelKind::RandomForest | ModelKind::GradientBoosting => {
                if kind != ModelKind::DecisionTree && !(1..=500).contains(&self.n_estimators) {
                    return bad(format!("n_estimators must lie in 1..=500, got {}", self.n_estimators));
                }
                if self.max_depth == Some(0) {
                    return bad("max_depth must be >= 1".into());
                }
                if self.min_samples_leaf == 0 {
                    return bad("min_samples_leaf must be >= 1".into());
                }
                if let Some(f) = self.max_features {
                    if !(f > 0.0 && f <= 1.0) {
                        return bad(format!("max_features must lie in (0, 1], got {f}"));
                    }
                }
                if kind == ModelKind::GradientBoosting {
                    positive("learning_rate", self.learning_rate)?;
                }
            }
            ModelKind::Mlp => {
                if let Some(w) = self.hidden_layers.iter().find(|w| !MLP_WIDTHS.contains(w)) {
                    return bad(format!("hidden layer width {w} not in {MLP_WIDTHS:?}"));
                }
                if !(1e-7..=1e-1).contains(&self.alpha) {
                    return bad(format!("alpha must lie in [1e-7, 1e-1], got {}", self.alpha));
                }
                positive("learning_rate", self.learning_rate)?;
                if self.batch_size == Some(0) {
                    return bad("batch_size must be >= 1".into());
                }
            }
            ModelKind::GpRegressor => {
                positive("length_scale", self.length_scale)?;
                positive("signal_variance", self.signal_variance)?;
                if !(self.noise >= 0.0 && self.noise.is_finite()) {
                    return bad(format!("noise must be >= 0, got {}", self.noise));
                }
            }
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        Ok(())
    }
}

/// Fitted parameters, one variant per learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    Ridge(linear::LinearModel),
    Lasso(linear::LinearModel),
    Logistic(logistic::LogisticModel),
    DecisionTree(tree::Tree),
    RandomForest(forest::Forest),
    GradientBoosting(boosting::Boosted),
    Mlp(mlp::MlpModel),
    GpRegressor(gp::GpModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub task: Task,
    pub columns: Vec<String>,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub params: Params,
}

fn check_labels(labels: &[usize]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&l| l >= N_CLASSES) {
        return Err(Error::DegenerateLabel(format!(
            "class id {bad} outside 0..{N_CLASSES}"
        )));
    }
    Ok(())
}

/// Fits `kind` to `x.values` and `x.targets`.
pub fn train(kind: ModelKind, x: &FeatureMatrix, hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    let task = Task::of(&x.targets);
    if !kind.supports(task) {
        return Err(Error::Kind(format!("{kind} does not support {task:?}")));
    }
    hp.validate(kind)?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Argument("cannot train on zero rows".into()));
    }
    if x.targets.len() != n {
        return Err(Error::Shape(format!("{n} rows vs {} targets", x.targets.len())));
    }
    if let Some(v) = x.values.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("feature matrix holds non-finite value {v}")));
    }
    let m = &x.values;
    let params = match &x.targets {
        Targets::Regression(y) => {
            if let Some(v) = y.iter().find(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite target {v}")));
            }
            match kind {
                ModelKind::Ridge => Params::Ridge(linear::ridge(m, y, hp.lambda)?),
                ModelKind::Lasso => Params::Lasso(linear::lasso(m, y, hp.lambda, hp.max_iter)?),
                ModelKind::DecisionTree => Params::DecisionTree(forest::single_tree(
                    m,
                    tree::TreeTarget::Values(y),
                    hp,
                    seed,
                )),
                ModelKind::RandomForest => {
                    Params::RandomForest(forest::fit(m, tree::TreeTarget::Values(y), hp, seed))
                }
                ModelKind::GradientBoosting => {
                    Params::GradientBoosting(boosting::fit_regression(m, y, hp, seed))
                }
                ModelKind::Mlp => Params::Mlp(mlp::fit(m, mlp::MlpTargets::Values(y), hp, seed)?),
                ModelKind::GpRegressor => Params::GpRegressor(gp::fit(m, y, hp)?),
                ModelKind::Logistic => unreachable!("checked by supports"),
            }
        }
        Targets::Classification(labels) => {
            check_labels(labels)?;
            let target = tree::TreeTarget::Classes {
                labels,
                n_classes: N_CLASSES,
            };
            match kind {
                ModelKind::Logistic => {
                    Params::Logistic(logistic::fit(m, labels, N_CLASSES, hp.c, hp.max_iter))
                }
                ModelKind::DecisionTree => Params::DecisionTree(forest::single_tree(m, target, hp, seed)),
                ModelKind::RandomForest => Params::RandomForest(forest::fit(m, target, hp, seed)),
                ModelKind::GradientBoosting => Params::GradientBoosting(boosting::fit_classification(
                    m, labels, N_CLASSES, hp, seed,
                )),
                ModelKind::Mlp => Params::Mlp(mlp::fit(m, mlp::MlpTargets::Classes(labels), hp, seed)?),
                _ => unreachable!("checked by supports"),
            }
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        task,
        columns: x.columns.clone(),
        seed,
        hyperparams: hp.clone(),
        params,
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    fn check_columns(&self, x: &FeatureMatrix) -> Result<()> {
        if x.columns != self.columns {
            return Err(Error::Shape(format!(
                "model expects columns {:?}, got {:?}",
                self.columns, x.columns
            )));
        }
        Ok(())
    }

    /// Predictions for a checked feature matrix.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Targets> {
        self.check_columns(x)?;
        self.predict_matrix(&x.values)
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Matrix> {
        self.check_columns(x)?;
        self.predict_proba_matrix(&x.values)
    }

    /// Predictions for raw rows laid out as [`TrainedModel::columns`].
    pub fn predict_matrix(&self, m: &Matrix) -> Result<Targets> {
        if m.cols() != self.columns.len() {
            return Err(Error::Shape(format!(
                "model expects {} columns, got {}",
                self.columns.len(),
                m.cols()
            )));
        }
        match self.task {
            Task::Regression => Ok(Targets::Regression(
                m.iter_rows().map(|r| self.predict_value(r)).collect(),
            )),
            Task::Classification => {
                let proba = self.predict_proba_matrix(m)?;
                Ok(Targets::Classification(proba.iter_rows().map(argmax).collect()))
            }
        }
    }

    pub fn predict_proba_matrix(&self, m: &Matrix) -> Result<Matrix> {
        if self.task != Task::Classification {
            return Err(Error::Kind(format!("{} is a regression model", self.kind)));
        }
        if m.cols() != self.columns.len() {
            return Err(Error::Shape(format!(
                "model expects {} columns, got {}",
                self.columns.len(),
                m.cols()
            )));
        }
        let mut out = Matrix::zeros(m.rows(), N_CLASSES);
        for (i, row) in m.iter_rows().enumerate() {
            let p = match &self.params {
                Params::Logistic(l) => l.predict_proba(row),
                Params::DecisionTree(t) => t.predict_row(row).to_vec(),
                Params::RandomForest(f) => f.predict_row(row),
                Params::GradientBoosting(g) => g.predict_proba(row),
                Params::Mlp(n) => n.predict_proba(row),
                _ => unreachable!("classification params"),
            };
            out.row_mut(i).copy_from_slice(&p);
        }
        Ok(out)
    }

    fn predict_value(&self, row: &[f64]) -> f64 {
        match &self.params {
            Params::Ridge(l) | Params::Lasso(l) => l.predict(row),
            Params::DecisionTree(t) => t.predict_row(row)[0],
            Params::RandomForest(f) => f.predict_row(row)[0],
            Params::GradientBoosting(g) => g.predict_value(row),
            Params::Mlp(n) => n.predict_value(row),
            Params::GpRegressor(g) => g.predict(row),
            Params::Logistic(_) => unreachable!("regression params"),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Argument(format!(
                "model format version {} (supported: {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[[f64; 2]], targets: Targets) -> FeatureMatrix {
        FeatureMatrix {
            values: Matrix::from_rows(rows).unwrap(),
            columns: vec!["a".into(), "b".into()],
            row_index: (0..rows.len()).collect(),
            targets,
        }
    }

    #[test]
    fn kind_task_support() {
        assert!(!ModelKind::Ridge.supports(Task::Classification));
        assert!(!ModelKind::Logistic.supports(Task::Regression));
        assert!(ModelKind::RandomForest.supports(Task::Classification));
        let x = matrix(&[[0.0, 1.0]], Targets::Classification(vec![0]));
        assert!(matches!(
            train(ModelKind::Ridge, &x, &Hyperparams::default(), 0),
            Err(Error::Kind(_))
        ));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RF".parse::<ModelKind>().unwrap(), ModelKind::RandomForest);
        assert_eq!("gradient_boosting".parse::<ModelKind>().unwrap(), ModelKind::GradientBoosting);
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn hyperparam_ranges() {
        let mut hp = Hyperparams::default_for(ModelKind::RandomForest);
        hp.n_estimators = 501;
        assert!(hp.validate(ModelKind::RandomForest).is_err());
        let mut hp = Hyperparams::default_for(ModelKind::Mlp);
        hp.hidden_layers = [64, 48, 64];
        assert!(hp.validate(ModelKind::Mlp).is_err());
        let mut hp = Hyperparams::default_for(ModelKind::Logistic);
        hp.c = 0.5;
        assert!(hp.validate(ModelKind::Logistic).is_err());
    }

    #[test]
    fn json_overlay_keeps_kind_defaults() {
        let hp = Hyperparams::from_json(
            ModelKind::GradientBoosting,
            &serde_json::json!({"n_estimators": 20}),
        )
        .unwrap();
        assert_eq!(hp.n_estimators, 20);
        assert_eq!(hp.max_depth, Some(3));
        assert!(Hyperparams::from_json(ModelKind::Ridge, &serde_json::json!({"nope": 1})).is_err());
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let x = matrix(&[[0.0, 1.0], [1.0, 0.0]], Targets::Classification(vec![0, 7]));
        assert!(matches!(
            train(ModelKind::DecisionTree, &x, &Hyperparams::default(), 0),
            Err(Error::DegenerateLabel(_))
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn column_mismatch_is_shape_error() {
        let x = matrix(&[[0.0, 1.0], [1.0, 0.0]], Targets::Regression(vec![1.0, 2.0]));
        let m = train(ModelKind::DecisionTree, &x, &Hyperparams::default(), 0).unwrap();
        let mut other = x.clone();
        other.columns = vec!["b".into(), "a".into()];
        assert!(matches!(m.predict(&other), Err(Error::Shape(_))));
    }
}
