//! Metrics, ROC analysis, repeated k-fold cross-validation, learning
//! curves and forest feature importance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_split, zscore_apply, zscore_fit, Dataset, NormalizationStats, Partition, SplitPlan};
use crate::error::{Error, Result};
use crate::featurize::{assemble, FeatureMatrix, FeatureSpec, Targets};
use crate::learners::{train, Hyperparams, ModelKind, Params, Task, TrainedModel, N_CLASSES};
use crate::materials::Registry;
use crate::matrix::Matrix;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} true values vs {b} predictions")));
    }
    if a == 0 {
        return Err(Error::Argument("metrics need at least one value".into()));
    }
    Ok(())
}

/// `1 − SS_res / SS_tot`. Undefined for constant `y_true`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Domain("r2 is undefined for a constant y_true".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

pub fn accuracy(actual: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(actual.len(), predicted.len())?;
    let hits = actual.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / actual.len() as f64)
}

/// Counts indexed `[predicted][actual]`, so row sums are per-class
/// prediction counts.
pub type Confusion = [[u64; N_CLASSES]; N_CLASSES];

pub fn confusion(actual: &[usize], predicted: &[usize]) -> Result<Confusion> {
    check_lengths(actual.len(), predicted.len())?;
    let mut c = [[0u64; N_CLASSES]; N_CLASSES];
    for (&a, &p) in actual.iter().zip(predicted) {
        if a >= N_CLASSES || p >= N_CLASSES {
            return Err(Error::DegenerateLabel(format!("class id {} outside 0..{N_CLASSES}", a.max(p))));
        }
        c[p][a] += 1;
    }
    Ok(c)
}

/// Mean multiclass log loss with probabilities clipped to `[1e-15, 1]`.
pub fn log_loss(proba: &Matrix, labels: &[usize]) -> Result<f64> {
    check_lengths(labels.len(), proba.rows())?;
    let mut total = 0.0;
    for (row, &l) in proba.iter_rows().zip(labels) {
        let p = row.get(l).copied().ok_or_else(|| {
            Error::Shape(format!("label {l} outside {} probability columns", row.len()))
        })?;
        total -= p.clamp(1e-15, 1.0).ln();
    }
    Ok(total / labels.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Decision thresholds, from +∞ down to −∞. A sample is called positive
    /// when its score is at least the threshold.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// ROC curve over every distinct score. Tied scores move the curve
/// diagonally, which credits ties with one half.
pub fn roc_auc_binary(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    check_lengths(labels.len(), scores.len())?;
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Domain(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabel("ROC needs both positive and negative samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x - fpr[fpr.len() - 1]) * (y + tpr[tpr.len() - 1]) / 2.0;
        thresholds.push(s);
        fpr.push(x);
        tpr.push(y);
    }
    thresholds.push(f64::NEG_INFINITY);
    fpr.push(1.0);
    tpr.push(1.0);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassRoc {
    /// One-vs-rest curve per class; `None` where the class has no positive
    /// (or no negative) sample.
    pub per_class: Vec<Option<RocCurve>>,
    pub micro: f64,
    pub macro_avg: f64,
}

/// One-vs-rest ROC for an `n × 4` probability matrix. The macro average
/// skips classes without both positives and negatives; the micro average
/// pools all `n · 4` binarized pairs.
pub fn roc_auc_multiclass(proba: &Matrix, labels: &[usize]) -> Result<MulticlassRoc> {
    check_lengths(labels.len(), proba.rows())?;
    let k = proba.cols();
    if let Some(l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::DegenerateLabel(format!("label {l} outside {k} probability columns")));
    }
    let mut present = vec![false; k];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::DegenerateLabel("ROC needs at least two classes present".into()));
    }
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        if !present[c] {
            log::warn!("class {c} absent from labels; skipped in the macro average");
            per_class.push(None);
            continue;
        }
        let bin: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        per_class.push(Some(roc_auc_binary(&proba.column(c), &bin)?));
    }
    let aucs: Vec<f64> = per_class.iter().flatten().map(|r| r.auc).collect();
    let macro_avg = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let mut scores = Vec::with_capacity(labels.len() * k);
    let mut bin = Vec::with_capacity(labels.len() * k);
    for (row, &l) in proba.iter_rows().zip(labels) {
        for (c, &s) in row.iter().enumerate() {
            scores.push(s);
            bin.push(l == c);
        }
    }
    let micro = roc_auc_binary(&scores, &bin)?.auc;
    Ok(MulticlassRoc {
        per_class,
        micro,
        macro_avg,
    })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 5, runs: 5, seed: 0 }
    }
}

/// SplitMix64 finalizer; spreads `(seed, a, b)` into an independent seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Metric names used in reports. Regression: `r2`, `mae` (meters).
/// Classification: `accuracy`, `log_loss`, `macro_auc`, `micro_auc`.
pub type Metrics = BTreeMap<String, f64>;

/// Inputs of one fold, kept so callers can audit what the fold saw.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldDetails {
    pub partition: Partition,
    pub normalization: Option<NormalizationStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub run: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(skip)]
    pub details: Option<FoldDetails>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub task: Task,
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub n_rows: usize,
    pub folds: Vec<FoldScore>,
    /// Per metric, the fold mean of each run.
    pub run_means: BTreeMap<String, Vec<f64>>,
    /// Per metric, mean and population std over the run means.
    pub summary: BTreeMap<String, MeanStd>,
}

impl CvReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).map(|m| m.mean)
    }

    /// Confusion counts summed over every fold of every run.
    pub fn pooled_confusion(&self) -> Option<Confusion> {
        let mut total = [[0u64; N_CLASSES]; N_CLASSES];
        for f in &self.folds {
            let c = f.confusion?;
            for (tr, cr) in total.iter_mut().zip(c) {
                for (t, v) in tr.iter_mut().zip(cr) {
                    *t += v;
                }
            }
        }
        Some(total)
    }
}

/// Fits normalization on the training rows only.
pub fn fold_normalization(train_rows: &FeatureMatrix) -> Result<NormalizationStats> {
    zscore_fit(train_rows)
}

/// Scores a trained model on a (normalized) test matrix.
pub fn score(model: &TrainedModel, test: &FeatureMatrix) -> Result<(Metrics, Option<Confusion>)> {
    let mut metrics = Metrics::new();
    match (&test.targets, model.predict(test)?) {
        (Targets::Regression(y), Targets::Regression(p)) => {
            // R² is undefined on a constant test fold (e.g. leave-one-out).
            if let Ok(v) = r2(y, &p) {
                metrics.insert("r2".into(), v);
            }
            metrics.insert("mae".into(), mae(y, &p)?);
            Ok((metrics, None))
        }
        (Targets::Classification(y), Targets::Classification(p)) => {
            let proba = model.predict_proba(test)?;
            metrics.insert("accuracy".into(), accuracy(y, &p)?);
            metrics.insert("log_loss".into(), log_loss(&proba, y)?);
            if let Ok(roc) = roc_auc_multiclass(&proba, y) {
                metrics.insert("macro_auc".into(), roc.macro_avg);
                metrics.insert("micro_auc".into(), roc.micro);
            }
            Ok((metrics, Some(confusion(y, &p)?)))
        }
        _ => Err(Error::Kind("model task does not match the targets".into())),
    }
}

/// Trains on `train` rows and scores on `test` rows of `fm`, normalizing
/// with statistics from the training rows when the learner wants it.
pub fn run_fold(
    fm: &FeatureMatrix,
    partition: &Partition,
    kind: ModelKind,
    hp: &Hyperparams,
    seed: u64,
) -> Result<(Metrics, Option<Confusion>, Option<NormalizationStats>)> {
    let mut train_m = fm.select_rows(&partition.train);
    let mut test_m = fm.select_rows(&partition.test);
    let stats = if kind.wants_scaling() {
        let s = fold_normalization(&train_m)?;
        train_m = zscore_apply(&train_m, &s)?;
        test_m = zscore_apply(&test_m, &s)?;
        Some(s)
    } else {
        None
    };
    let model = train(kind, &train_m, hp, seed)?;
    let (metrics, conf) = score(&model, &test_m)?;
    Ok((metrics, conf, stats))
}

fn summarize(folds: &[FoldScore], runs: usize) -> (BTreeMap<String, Vec<f64>>, BTreeMap<String, MeanStd>) {
    let mut names: Vec<String> = folds.iter().flat_map(|f| f.metrics.keys().cloned()).collect();
    names.sort();
    names.dedup();
    let mut run_means = BTreeMap::new();
    let mut summary = BTreeMap::new();
    for name in names {
        let mut means = Vec::with_capacity(runs);
        for r in 0..runs {
            let vals: Vec<f64> = folds
                .iter()
                .filter(|f| f.run == r)
                .filter_map(|f| f.metrics.get(&name).copied())
                .collect();
            if !vals.is_empty() {
                means.push(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        if !means.is_empty() {
            summary.insert(name.clone(), MeanStd::of(&means));
            run_means.insert(name, means);
        }
    }
    (run_means, summary)
}

/// Training-row subsets per (run, fold); `None` uses the full training split.
type TrainFilter<'a> = Option<&'a (dyn Fn(usize, usize, &[usize]) -> Vec<usize> + Sync)>;

fn cross_validate_inner(
    fm: &FeatureMatrix,
    kind: ModelKind,
    hp: &Hyperparams,
    cfg: &CvConfig,
    filter: TrainFilter<'_>,
) -> Result<CvReport> {
    if cfg.runs == 0 {
        return Err(Error::Argument("runs must be >= 1".into()));
    }
    let n = fm.n_rows();
    let mut jobs = Vec::new();
    for run in 0..cfg.runs {
        let plan = SplitPlan::kfold(cfg.k, derive_seed(cfg.seed, run as u64, u64::MAX));
        for (fold, p) in make_split(n, &plan)?.into_iter().enumerate() {
            jobs.push((run, fold, p));
        }
    }
    let folds: Vec<FoldScore> = jobs
        .into_par_iter()
        .map(|(run, fold, mut partition)| {
            if let Some(f) = filter {
                partition.train = f(run, fold, &partition.train);
            }
            let seed = derive_seed(cfg.seed, run as u64, fold as u64);
            let (metrics, confusion, stats) = run_fold(fm, &partition, kind, hp, seed)?;
            Ok(FoldScore {
                run,
                fold,
                n_train: partition.train.len(),
                n_test: partition.test.len(),
                metrics,
                confusion,
                details: Some(FoldDetails {
                    partition,
                    normalization: stats,
                }),
            })
        })
        .collect::<Result<_>>()?;
    let (run_means, summary) = summarize(&folds, cfg.runs);
    Ok(CvReport {
        kind,
        task: Task::of(&fm.targets),
        k: cfg.k,
        runs: cfg.runs,
        seed: cfg.seed,
        n_rows: n,
        folds,
        run_means,
        summary,
    })
}

/// Repeated k-fold cross-validation on an assembled matrix: `runs`
/// independent shuffles, `k` folds each, normalization refit per fold.
pub fn cross_validate_matrix(fm: &FeatureMatrix, kind: ModelKind, hp: &Hyperparams, cfg: &CvConfig) -> Result<CvReport> {
    cross_validate_inner(fm, kind, hp, cfg, None)
}

/// Assembles `spec` over `ds`, then runs [`cross_validate_matrix`].
pub fn cross_validate(
    ds: &Dataset,
    spec: &FeatureSpec,
    registry: &Registry,
    kind: ModelKind,
    hp: &Hyperparams,
    cfg: &CvConfig,
) -> Result<CvReport> {
    let fm = assemble(ds, spec, registry)?;
    cross_validate_matrix(&fm, kind, hp, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub fraction: f64,
    pub report: CvReport,
}

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Cross-validation with each training split subsampled to `fraction`.
/// Test folds are unchanged. Fractions leaving fewer than two training rows
/// in some fold are skipped.
pub fn learning_curve(
    fm: &FeatureMatrix,
    kind: ModelKind,
    hp: &Hyperparams,
    cfg: &CvConfig,
    fractions: &[f64],
) -> Result<Vec<LearningPoint>> {
    let mut out = Vec::with_capacity(fractions.len());
    let smallest_train = fm.n_rows() - fm.n_rows().div_ceil(cfg.k.max(1));
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Argument(format!("fraction must lie in (0, 1], got {fraction}")));
        }
        let keep = (fraction * smallest_train as f64).round() as usize;
        if keep < 2 {
            log::warn!("fraction {fraction} leaves fewer than 2 training rows; skipped");
            continue;
        }
        let report = if fraction == 1.0 {
            cross_validate_inner(fm, kind, hp, cfg, None)?
        } else {
            let sub = move |run: usize, fold: usize, train: &[usize]| -> Vec<usize> {
                let m = ((fraction * train.len() as f64).round() as usize).max(2);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ 0x5eed, run as u64, fold as u64));
                let mut t = train.to_vec();
                t.shuffle(&mut rng);
                t.truncate(m);
                t.sort_unstable();
                t
            };
            cross_validate_inner(fm, kind, hp, cfg, Some(&sub))?
        };
        out.push(LearningPoint { fraction, report });
    }
    Ok(out)
}

/// Mean decrease in impurity per column, summing to one.
pub fn rf_feature_importance(model: &TrainedModel) -> Result<Vec<(String, f64)>> {
    let Params::RandomForest(forest) = &model.params else {
        return Err(Error::Kind(format!(
            "feature importance needs a random forest, got {}",
            model.kind
        )));
    };
    Ok(model.columns.iter().cloned().zip(forest.feature_importance()).collect())
}
