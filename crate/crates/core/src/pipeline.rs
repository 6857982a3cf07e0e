//! A trained model bundled with its feature spec and normalization, so a
//! single raw record can be scored the same way the training rows were.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{zscore_apply, zscore_fit, Dataset, DefectClass, MeltpoolRecord, NormalizationStats};
use crate::error::{Error, Result};
use crate::featurize::{assemble, feature_row, FeatureGroup, FeatureMatrix, FeatureSpec, Target, Targets};
use crate::learners::{argmax, train, Hyperparams, ModelKind, Task, TrainedModel, N_CLASSES};
use crate::materials::Registry;
use crate::matrix::Matrix;

pub const PIPELINE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub format_version: u32,
    pub spec: FeatureSpec,
    /// Present when the learner was trained on z-scored columns.
    pub normalization: Option<NormalizationStats>,
    pub model: TrainedModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// Meters.
    Value(f64),
    Class { id: usize, proba: [f64; N_CLASSES] },
}

impl Prediction {
    pub fn class(&self) -> Option<DefectClass> {
        match self {
            Prediction::Class { id, .. } => DefectClass::from_id(*id),
            Prediction::Value(_) => None,
        }
    }
}

impl Pipeline {
    /// Assembles `spec` over `ds` and trains on every row.
    pub fn fit(
        ds: &Dataset,
        spec: &FeatureSpec,
        registry: &Registry,
        kind: ModelKind,
        hp: &Hyperparams,
        seed: u64,
    ) -> Result<Pipeline> {
        let fm = assemble(ds, spec, registry)?;
        Pipeline::fit_matrix(&fm, spec, kind, hp, seed)
    }

    pub fn fit_matrix(
        fm: &FeatureMatrix,
        spec: &FeatureSpec,
        kind: ModelKind,
        hp: &Hyperparams,
        seed: u64,
    ) -> Result<Pipeline> {
        let (normalization, model) = if kind.wants_scaling() {
            let stats = zscore_fit(fm)?;
            let scaled = zscore_apply(fm, &stats)?;
            (Some(stats), train(kind, &scaled, hp, seed)?)
        } else {
            (None, train(kind, fm, hp, seed)?)
        };
        Ok(Pipeline {
            format_version: PIPELINE_FORMAT_VERSION,
            spec: spec.clone(),
            normalization,
            model,
        })
    }

    pub fn target(&self) -> Target {
        self.spec.target
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    /// Model input row for `record`, normalized if the model expects it.
    pub fn featurize(&self, record: &MeltpoolRecord, registry: &Registry) -> Result<Vec<f64>> {
        let columns = self.spec.column_names(registry);
        if columns != self.model.columns {
            return Err(Error::Shape(format!(
                "registry yields columns {columns:?}, model was trained on {:?}",
                self.model.columns
            )));
        }
        let mut row = feature_row(record, &self.spec, registry)?;
        if let Some(stats) = &self.normalization {
            stats.normalize_row(&mut row);
        }
        Ok(row)
    }

    fn predict_rows(&self, rows: &Matrix) -> Result<Vec<Prediction>> {
        match self.model.task {
            Task::Regression => match self.model.predict_matrix(rows)? {
                Targets::Regression(v) => Ok(v.into_iter().map(Prediction::Value).collect()),
                Targets::Classification(_) => unreachable!("regression model"),
            },
            Task::Classification => {
                let proba = self.model.predict_proba_matrix(rows)?;
                Ok(proba
                    .iter_rows()
                    .map(|p| {
                        let mut arr = [0.0; N_CLASSES];
                        arr.copy_from_slice(p);
                        Prediction::Class { id: argmax(p), proba: arr }
                    })
                    .collect())
            }
        }
    }

    pub fn predict_record(&self, record: &MeltpoolRecord, registry: &Registry) -> Result<Prediction> {
        let row = self.featurize(record, registry)?;
        let m = Matrix::from_vec(1, row.len(), row)?;
        Ok(self.predict_rows(&m)?.remove(0))
    }

    pub fn predict_records(&self, records: &[MeltpoolRecord], registry: &Registry) -> Result<Vec<Prediction>> {
        let mut data = Vec::with_capacity(records.len() * self.model.columns.len());
        for r in records {
            data.extend(self.featurize(r, registry)?);
        }
        let m = Matrix::from_vec(records.len(), self.model.columns.len(), data)?;
        self.predict_rows(&m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Pipeline = serde_json::from_str(s)?;
        if p.format_version != PIPELINE_FORMAT_VERSION {
            return Err(Error::Argument(format!(
                "pipeline format version {} (supported: {PIPELINE_FORMAT_VERSION})",
                p.format_version
            )));
        }
        // Re-validates the nested model's version.
        TrainedModel::from_json(&serde_json::to_string(&p.model)?)?;
        Ok(p)
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

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Predicted defect class over a power × velocity grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessMap {
    /// W.
    pub p_axis: Vec<f64>,
    /// m/s.
    pub v_axis: Vec<f64>,
    /// `grid[i][j]` is the class id at `(p_axis[i], v_axis[j])`.
    pub grid: Vec<Vec<usize>>,
}

/// Scores `base` at every `(P, V)` pair of a `resolution × resolution`
/// grid, holding every other field fixed. Derived features such as
/// absorptivity are recomputed per cell.
pub fn decision_boundary_grid(
    pipeline: &Pipeline,
    base: &MeltpoolRecord,
    registry: &Registry,
    p_range: (f64, f64),
    v_range: (f64, f64),
    resolution: usize,
) -> Result<ProcessMap> {
    if pipeline.model.task != Task::Classification {
        return Err(Error::Kind(format!(
            "process maps need a defect classifier, model predicts {}",
            pipeline.target().name()
        )));
    }
    for (group, col) in [(FeatureGroup::BeamPower, "power_w"), (FeatureGroup::ScanSpeed, "velocity_m_s")] {
        if !pipeline.spec.has(group) {
            return Err(Error::FeatureAvailability(format!("model has no `{col}` column")));
        }
    }
    if resolution == 0 {
        return Err(Error::Argument("resolution must be >= 1".into()));
    }
    for (name, (lo, hi)) in [("power", p_range), ("velocity", v_range)] {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Argument(format!("{name} range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
    }
    let p_axis = linspace(p_range.0, p_range.1, resolution);
    let v_axis = linspace(v_range.0, v_range.1, resolution);
    let mut records = Vec::with_capacity(resolution * resolution);
    for &p in &p_axis {
        for &v in &v_axis {
            records.push(MeltpoolRecord {
                power: p,
                velocity: v,
                ..base.clone()
            });
        }
    }
    let preds = pipeline.predict_records(&records, registry)?;
    let ids: Vec<usize> = preds
        .iter()
        .map(|p| match p {
            Prediction::Class { id, .. } => *id,
            Prediction::Value(_) => unreachable!("classifier"),
        })
        .collect();
    let grid = ids.chunks(resolution).map(|c| c.to_vec()).collect();
    Ok(ProcessMap { p_axis, v_axis, grid })
}
