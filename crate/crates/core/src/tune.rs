//! Seeded random hyperparameter search with a cross-validated objective.
//!
//! Regression trials are scored by mean CV R² (higher is better),
//! classification trials by mean CV multiclass log loss (lower is better).
//! Every trial reuses the same fold assignment.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluate::{cross_validate_matrix, CvConfig};
use crate::featurize::{assemble, FeatureMatrix, FeatureSpec};
use crate::learners::{Hyperparams, ModelKind, Task, MLP_WIDTHS};
use crate::materials::Registry;

pub const DEFAULT_BUDGET: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    /// Inclusive.
    Int { lo: i64, hi: i64 },
    Uniform { lo: f64, hi: f64 },
    /// Uniform in `ln x`.
    LogUniform { lo: f64, hi: f64 },
    Choice { options: Vec<Value> },
}

impl Domain {
    pub fn sample(&self, rng: &mut impl Rng) -> Value {
        match self {
            Domain::Int { lo, hi } => json!(rng.random_range(*lo..=*hi)),
            Domain::Uniform { lo, hi } => json!(rng.random_range(*lo..=*hi)),
            Domain::LogUniform { lo, hi } => {
                let x = rng.random_range(lo.ln()..=hi.ln()).exp();
                json!(x.clamp(*lo, *hi))
            }
            Domain::Choice { options } => options[rng.random_range(0..options.len())].clone(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Domain::Int { lo, hi } => v.as_i64().is_some_and(|x| (*lo..=*hi).contains(&x)),
            Domain::Uniform { lo, hi } | Domain::LogUniform { lo, hi } => {
                v.as_f64().is_some_and(|x| (*lo..=*hi).contains(&x))
            }
            Domain::Choice { options } => options.contains(v),
        }
    }
}

/// Named domains; names are [`Hyperparams`] field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub kind: ModelKind,
    pub params: Vec<(String, Domain)>,
}

fn log(lo: f64, hi: f64) -> Domain {
    Domain::LogUniform { lo, hi }
}

impl SearchSpace {
    pub fn for_kind(kind: ModelKind) -> SearchSpace {
        let depth_choices = Domain::Choice {
            options: vec![Value::Null, json!(4), json!(8), json!(16)],
        };
        let params: Vec<(&str, Domain)> = match kind {
            ModelKind::Ridge => vec![("lambda", log(1e-4, 1e2))],
            ModelKind::Lasso => vec![("lambda", log(1e-5, 1.0))],
            ModelKind::Logistic => vec![("c", log(1.0, 500.0))],
            ModelKind::DecisionTree => vec![
                ("max_depth", depth_choices),
                ("min_samples_leaf", Domain::Int { lo: 1, hi: 10 }),
            ],
            ModelKind::RandomForest => vec![
                ("n_estimators", Domain::Int { lo: 1, hi: 500 }),
                ("max_depth", depth_choices),
                ("min_samples_leaf", Domain::Int { lo: 1, hi: 5 }),
            ],
            ModelKind::GradientBoosting => vec![
                ("n_estimators", Domain::Int { lo: 1, hi: 500 }),
                ("learning_rate", log(0.01, 0.3)),
                ("max_depth", Domain::Int { lo: 2, hi: 5 }),
            ],
            ModelKind::Mlp => {
                let mut options = Vec::new();
                for a in MLP_WIDTHS {
                    for b in MLP_WIDTHS {
                        for c in MLP_WIDTHS {
                            options.push(json!([a, b, c]));
                        }
                    }
                }
                vec![
                    ("hidden_layers", Domain::Choice { options }),
                    ("alpha", log(1e-7, 1e-1)),
                    ("learning_rate", log(1e-4, 1e-2)),
                ]
            }
            ModelKind::GpRegressor => vec![
                ("signal_variance", log(1e-1, 1e3)),
                ("length_scale", log(1e-3, 1e3)),
                ("noise", log(1e-6, 1e-1)),
            ],
        };
        SearchSpace {
            kind,
            params: params.into_iter().map(|(n, d)| (n.to_string(), d)).collect(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> BTreeMap<String, Value> {
        self.params.iter().map(|(n, d)| (n.clone(), d.sample(rng))).collect()
    }

    pub fn contains(&self, sample: &BTreeMap<String, Value>) -> bool {
        sample.len() == self.params.len()
            && self.params.iter().all(|(n, d)| sample.get(n).is_some_and(|v| d.contains(v)))
    }

    /// Overlays `sample` on the kind's defaults.
    pub fn hyperparams(&self, sample: &BTreeMap<String, Value>) -> Result<Hyperparams> {
        let obj: serde_json::Map<String, Value> = sample.clone().into_iter().collect();
        Hyperparams::from_json(self.kind, &Value::Object(obj))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: BTreeMap<String, Value>,
    /// `None` when the trial failed.
    pub objective: Option<f64>,
    /// Objective metric per fold, ordered by (run, fold).
    pub fold_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// 1 for the best successful trial.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub kind: ModelKind,
    /// `r2` or `log_loss`.
    pub metric: String,
    pub maximize: bool,
    pub best_index: usize,
    pub best: Hyperparams,
    pub trials: Vec<Trial>,
}

impl SearchResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best_index]
    }
}

/// Draws the full trial sequence for `(space, seed, budget)`.
pub fn trial_params(space: &SearchSpace, budget: usize, seed: u64) -> Vec<BTreeMap<String, Value>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..budget).map(|_| space.sample(&mut rng)).collect()
}

pub fn search(
    space: &SearchSpace,
    fm: &FeatureMatrix,
    budget: usize,
    cv: &CvConfig,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::Argument("budget must be >= 1".into()));
    }
    let (metric, maximize) = match Task::of(&fm.targets) {
        Task::Regression => ("r2", true),
        Task::Classification => ("log_loss", false),
    };
    let mut trials = Vec::with_capacity(budget);
    for (index, params) in trial_params(space, budget, seed).into_iter().enumerate() {
        let outcome = space.hyperparams(&params).and_then(|hp| {
            let report = cross_validate_matrix(fm, space.kind, &hp, cv)?;
            let folds: Vec<f64> = report
                .folds
                .iter()
                .map(|f| f.metrics.get(metric).copied().unwrap_or(f64::NAN))
                .collect();
            let objective = report.mean(metric).unwrap_or(f64::NAN);
            if objective.is_finite() {
                Ok((objective, folds))
            } else {
                Err(Error::Numerical(format!("non-finite {metric}")))
            }
        });
        let trial = match outcome {
            Ok((objective, fold_scores)) => Trial {
                index,
                params,
                objective: Some(objective),
                fold_scores,
                error: None,
                rank: None,
            },
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                Trial {
                    index,
                    params,
                    objective: None,
                    fold_scores: Vec::new(),
                    error: Some(e.to_string()),
                    rank: None,
                }
            }
        };
        trials.push(trial);
    }

    let mut order: Vec<(usize, f64)> = trials.iter().filter_map(|t| Some((t.index, t.objective?))).collect();
    if order.is_empty() {
        let log: Vec<String> = trials
            .iter()
            .map(|t| format!("trial {}: {}", t.index, t.error.as_deref().unwrap_or("?")))
            .collect();
        return Err(Error::Search(format!("all {budget} trials failed\n{}", log.join("\n"))));
    }
    // Stable sort keeps earlier trials ahead on ties.
    order.sort_by(|a, b| {
        let c = a.1.total_cmp(&b.1);
        if maximize {
            c.reverse()
        } else {
            c
        }
    });
    for (rank, &(i, _)) in order.iter().enumerate() {
        trials[i].rank = Some(rank + 1);
    }
    let best_index = order[0].0;
    let best = space.hyperparams(&trials[best_index].params)?;
    Ok(SearchResult {
        kind: space.kind,
        metric: metric.into(),
        maximize,
        best_index,
        best,
        trials,
    })
}

/// Assembles `spec` over `ds`, then runs [`search`].
pub fn search_dataset(
    space: &SearchSpace,
    ds: &Dataset,
    spec: &FeatureSpec,
    registry: &Registry,
    budget: usize,
    cv: &CvConfig,
    seed: u64,
) -> Result<SearchResult> {
    let fm = assemble(ds, spec, registry)?;
    search(space, &fm, budget, cv, seed)
}
