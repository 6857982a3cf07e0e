//! Run configuration shared by the batch subcommands.
//!
//! ```json
//! {
//!   "dataset": "../crates/core/data/sample.csv",
//!   "target": "depth",
//!   "featurizations": [
//!     {"name": "baseline"},
//!     {"name": "baseline+absorptivity1", "extra": ["absorptivity1"]}
//!   ],
//!   "models": [{"kind": "random_forest", "hyperparams": {"n_estimators": 200}}],
//!   "cv": {"k": 5, "runs": 5},
//!   "seed": 0
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use meltpoolnet::evaluate::CvConfig;
use meltpoolnet::featurize::{FeatureGroup, FeatureSpec, Target, DEFAULT_AMBIENT_TEMP, DEFAULT_MIN_ABSORPTIVITY};
use meltpoolnet::learners::{Hyperparams, ModelKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Featurization {
    pub name: String,
    /// Groups added to the target's baseline.
    #[serde(default)]
    pub extra: Vec<FeatureGroup>,
    /// Replaces the baseline entirely when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<FeatureGroup>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub kind: ModelKind,
    #[serde(default)]
    pub hyperparams: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
}

fn default_k() -> usize {
    5
}

fn default_runs() -> usize {
    5
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection { k: 5, runs: 5 }
    }
}

fn default_featurizations() -> Vec<Featurization> {
    vec![Featurization {
        name: "baseline".into(),
        extra: Vec::new(),
        groups: None,
    }]
}

fn default_models() -> Vec<ModelEntry> {
    vec![ModelEntry {
        kind: ModelKind::RandomForest,
        hyperparams: serde_json::Value::Null,
    }]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_ambient() -> f64 {
    DEFAULT_AMBIENT_TEMP
}

fn default_eta() -> f64 {
    DEFAULT_MIN_ABSORPTIVITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub target: Target,
    #[serde(default = "default_featurizations")]
    pub featurizations: Vec<Featurization>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    /// When set, `train` searches hyperparameters with this many trials
    /// before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune_budget: Option<usize>,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Far-field temperature T0, K.
    #[serde(default = "default_ambient")]
    pub ambient_temp: f64,
    /// Flat-surface absorptivity η_m.
    #[serde(default = "default_eta")]
    pub min_absorptivity: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub min_absorptivity_by_material: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset = base.join(&cfg.dataset);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.featurizations.is_empty() {
            bail!("config lists no featurizations");
        }
        if self.models.is_empty() {
            bail!("config lists no models");
        }
        let mut names: Vec<&str> = self.featurizations.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            bail!("featurization name `{}` appears twice", w[0]);
        }
        for f in &self.featurizations {
            self.feature_spec(f).validate().with_context(|| format!("featurization `{}`", f.name))?;
        }
        for m in &self.models {
            self.hyperparams(m)?;
        }
        if self.cv.k < 2 {
            bail!("cv.k must be >= 2, got {}", self.cv.k);
        }
        if self.cv.runs == 0 {
            bail!("cv.runs must be >= 1");
        }
        if self.tune_budget == Some(0) {
            bail!("tune_budget must be >= 1");
        }
        Ok(())
    }

    pub fn feature_spec(&self, f: &Featurization) -> FeatureSpec {
        let base = FeatureSpec::baseline(self.target);
        let base = match &f.groups {
            Some(groups) => FeatureSpec {
                groups: groups.clone(),
                ..base
            },
            None => base,
        };
        let mut spec = f.extra.iter().fold(base, |s, g| s.with(*g));
        spec.ambient_temp = self.ambient_temp;
        spec.min_absorptivity = self.min_absorptivity;
        spec.min_absorptivity_by_material = self.min_absorptivity_by_material.clone();
        spec
    }

    pub fn hyperparams(&self, m: &ModelEntry) -> Result<Hyperparams> {
        let task = if self.target.is_classification() {
            meltpoolnet::learners::Task::Classification
        } else {
            meltpoolnet::learners::Task::Regression
        };
        if !m.kind.supports(task) {
            bail!("{} cannot predict {}", m.kind, self.target.name());
        }
        Hyperparams::from_json(m.kind, &m.hyperparams).with_context(|| format!("hyperparameters for {}", m.kind))
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k: self.cv.k,
            runs: self.cv.runs,
            seed: self.seed,
        }
    }

    /// The first featurization and model, used by `train` and `tune`.
    pub fn primary(&self) -> (&Featurization, &ModelEntry) {
        (&self.featurizations[0], &self.models[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(r#"{"dataset": "x.csv", "target": "width"}"#).unwrap();
        assert_eq!(cfg.models[0].kind, ModelKind::RandomForest);
        assert_eq!(cfg.cv, CvSection { k: 5, runs: 5 });
        assert_eq!(cfg.feature_spec(&cfg.featurizations[0]), FeatureSpec::baseline(Target::Width));
    }

    #[test]
    fn extra_groups_extend_baseline() {
        let cfg = parse(
            r#"{"dataset": "x.csv", "target": "depth",
                "featurizations": [{"name": "a1", "extra": ["absorptivity1"]}]}"#,
        )
        .unwrap();
        let spec = cfg.feature_spec(&cfg.featurizations[0]);
        assert!(spec.has(FeatureGroup::Absorptivity1));
        assert!(spec.has(FeatureGroup::ThermalProps));
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            r#"{"dataset": "x.csv", "target": "depth", "models": [{"kind": "logistic"}]}"#,
            r#"{"dataset": "x.csv", "target": "depth", "models": [{"kind": "ridge", "hyperparams": {"lambda": -1}}]}"#,
            r#"{"dataset": "x.csv", "target": "depth", "cv": {"k": 1}}"#,
            r#"{"dataset": "x.csv", "target": "depth", "featurizations": [{"name": "a"}, {"name": "a"}]}"#,
            r#"{"dataset": "x.csv", "target": "depth", "min_absorptivity": 2.0}"#,
            r#"{"dataset": "x.csv", "target": "depth", "colour": 1}"#,
            r#"{"dataset": "x.csv", "target": "volume"}"#,
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }
}
