//! Batch subcommands. Each one is a pure function of its config and input
//! files: outputs carry no timestamps and repeat byte for byte under a
//! fixed seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use meltpoolnet::analytical::{geometry_constant, rosenthal_geometry, RosenthalGeometry};
use meltpoolnet::data::{load_dataset, Dataset, Field};
use meltpoolnet::evaluate::{cross_validate_matrix, MeanStd};
use meltpoolnet::featurize::{assemble, Target};
use meltpoolnet::identify::{covariates_from_dataset, fit_power_law, FitConfig, COVARIATES};
use meltpoolnet::learners::{Hyperparams, ModelKind, Task};
use meltpoolnet::materials::Registry;
use meltpoolnet::pipeline::Pipeline;
use meltpoolnet::tune::{search, SearchResult, SearchSpace, DEFAULT_BUDGET};
use serde::{Deserialize, Serialize};

use crate::api::{self, PredictResponse, RecordInput};
use crate::config::RunConfig;

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&cfg.dataset).with_context(|| format!("loading {}", cfg.dataset.display()))
}

#[derive(Debug, Serialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub processes: BTreeMap<String, usize>,
    pub materials: BTreeMap<String, usize>,
    /// Materials absent from the registry.
    pub unknown_materials: Vec<String>,
    /// Materials present but without thermal data.
    pub materials_without_thermal: Vec<String>,
    /// Non-empty count per optional field.
    pub fields: BTreeMap<String, usize>,
    pub defect_classes: BTreeMap<String, usize>,
}

pub fn ingest(path: &Path, registry: &Registry) -> Result<IngestSummary> {
    let ds = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    let mut s = IngestSummary {
        rows: ds.len(),
        processes: BTreeMap::new(),
        materials: BTreeMap::new(),
        unknown_materials: Vec::new(),
        materials_without_thermal: Vec::new(),
        fields: BTreeMap::new(),
        defect_classes: BTreeMap::new(),
    };
    let fields = [
        Field::BeamDiameter,
        Field::LayerThickness,
        Field::HatchSpacing,
        Field::Depth,
        Field::Width,
        Field::Length,
        Field::DefectClass,
    ];
    for f in fields {
        s.fields.insert(f.name().into(), 0);
    }
    for r in &ds.records {
        *s.processes.entry(r.process.token().into()).or_default() += 1;
        *s.materials.entry(r.material.clone()).or_default() += 1;
        for f in fields {
            if r.has(f) {
                *s.fields.get_mut(f.name()).expect("seeded") += 1;
            }
        }
        if let Some(c) = r.defect_class {
            *s.defect_classes.entry(c.token().into()).or_default() += 1;
        }
    }
    for m in s.materials.keys() {
        match registry.lookup_material(m) {
            Err(_) => s.unknown_materials.push(m.clone()),
            Ok(spec) if spec.thermal.is_none() => s.materials_without_thermal.push(m.clone()),
            Ok(_) => {}
        }
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub featurization: String,
    pub model: ModelKind,
    pub target: Target,
    pub n_rows: usize,
    /// Per metric, the fold mean of each run (MAE in meters).
    pub run_means: BTreeMap<String, Vec<f64>>,
    pub summary: BTreeMap<String, MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub target: Target,
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
}

/// Metric columns for a target, in report order.
pub fn metric_names(target: Target) -> &'static [&'static str] {
    if target.is_classification() {
        &["accuracy", "log_loss", "macro_auc", "micro_auc"]
    } else {
        &["r2", "mae"]
    }
}

/// Scale applied to a metric for display: MAE goes to µm.
fn display_scale(metric: &str) -> (f64, String) {
    if metric == "mae" {
        (1e6, "mae_um".into())
    } else {
        (1.0, metric.into())
    }
}

pub fn benchmark(cfg: &RunConfig, registry: &Registry) -> Result<BenchmarkReport> {
    let ds = load(cfg)?;
    let cv = cfg.cv_config();
    let mut rows = Vec::new();
    for f in &cfg.featurizations {
        let spec = cfg.feature_spec(f);
        let fm = assemble(&ds, &spec, registry).with_context(|| format!("featurization `{}`", f.name))?;
        for m in &cfg.models {
            let hp = cfg.hyperparams(m)?;
            log::info!("benchmark {} × {} on {} rows", f.name, m.kind, fm.n_rows());
            let report = cross_validate_matrix(&fm, m.kind, &hp, &cv)
                .with_context(|| format!("cross-validating {} on `{}`", m.kind, f.name))?;
            rows.push(BenchmarkRow {
                featurization: f.name.clone(),
                model: m.kind,
                target: cfg.target,
                n_rows: report.n_rows,
                run_means: report.run_means,
                summary: report.summary,
            });
        }
    }
    Ok(BenchmarkReport {
        target: cfg.target,
        k: cv.k,
        runs: cv.runs,
        seed: cv.seed,
        rows,
    })
}

/// Numeric CSV: one row per (featurization, model), `<metric>_mean` and
/// `<metric>_std` columns, MAE in µm.
pub fn benchmark_csv(report: &BenchmarkReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let metrics = metric_names(report.target);
    let mut header = vec!["featurization".to_string(), "model".into(), "target".into(), "n_rows".into()];
    for m in metrics {
        let (_, name) = display_scale(m);
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![r.featurization.clone(), r.model.to_string(), r.target.name().into(), r.n_rows.to_string()];
        for m in metrics {
            let (scale, _) = display_scale(m);
            match r.summary.get(*m) {
                Some(s) => {
                    rec.push(format!("{}", s.mean * scale));
                    rec.push(format!("{}", s.std * scale));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Human-readable table: one row per (featurization, model) with
/// `mean ± std` cells. Means and stds are recomputed from the stored run
/// means.
pub fn report_csv(report: &BenchmarkReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let metrics = metric_names(report.target);
    let mut header = vec!["featurization".to_string(), "model".into()];
    header.extend(metrics.iter().map(|m| display_scale(m).1));
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec![r.featurization.clone(), r.model.to_string()];
        for m in metrics {
            let (scale, _) = display_scale(m);
            let cell = match r.run_means.get(*m) {
                Some(v) => {
                    let s = MeanStd::of(v);
                    let digits = if scale == 1.0 { 4 } else { 2 };
                    format!("{:.*} ± {:.*}", digits, s.mean * scale, digits, s.std * scale)
                }
                None => String::new(),
            };
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Runs the search for the config's first featurization and model.
pub fn tune(cfg: &RunConfig, registry: &Registry, budget: Option<usize>) -> Result<SearchResult> {
    let ds = load(cfg)?;
    let (f, m) = cfg.primary();
    let fm = assemble(&ds, &cfg.feature_spec(f), registry)?;
    let budget = budget.or(cfg.tune_budget).unwrap_or(DEFAULT_BUDGET);
    Ok(search(&SearchSpace::for_kind(m.kind), &fm, budget, &cfg.cv_config(), cfg.seed)?)
}

/// `trial,params,objective,rank,error`.
pub fn trials_csv(result: &SearchResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "params", "objective", "rank", "error"])?;
    for t in &result.trials {
        w.write_record([
            t.index.to_string(),
            serde_json::to_string(&t.params)?,
            t.objective.map(|v| v.to_string()).unwrap_or_default(),
            t.rank.map(|v| v.to_string()).unwrap_or_default(),
            t.error.clone().unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Fits the first featurization and model on every row, searching first
/// when the config sets a tune budget.
pub fn train(cfg: &RunConfig, registry: &Registry) -> Result<(Pipeline, Option<SearchResult>)> {
    let ds = load(cfg)?;
    let (f, m) = cfg.primary();
    let spec = cfg.feature_spec(f);
    let fm = assemble(&ds, &spec, registry)?;
    let (hp, search_result): (Hyperparams, _) = match cfg.tune_budget {
        Some(budget) => {
            let r = search(&SearchSpace::for_kind(m.kind), &fm, budget, &cfg.cv_config(), cfg.seed)?;
            (r.best.clone(), Some(r))
        }
        None => (cfg.hyperparams(m)?, None),
    };
    let pipeline = Pipeline::fit_matrix(&fm, &spec, m.kind, &hp, cfg.seed)?;
    Ok((pipeline, search_result))
}

pub fn predict(model: &Path, input: &RecordInput, registry: &Registry) -> Result<PredictResponse> {
    let pipeline = Pipeline::load(model).with_context(|| format!("loading model {}", model.display()))?;
    if let Err(why) = api::check_servable(&pipeline) {
        bail!("{why}");
    }
    Ok(api::predict(&pipeline, input, registry)?)
}

#[derive(Debug, Serialize)]
pub struct IdentifyOutput {
    pub target: Target,
    pub n: usize,
    pub equation: String,
    pub w0: f64,
    /// Keyed by covariate: `P`, `V`, `rho`, `Cp`, `k`, `Tm-T0`.
    pub exponents: BTreeMap<String, f64>,
    pub r2: f64,
    pub constraint_residual: f64,
    pub low_confidence: bool,
}

pub fn identify(dataset: &Path, target: Target, ambient_temp: f64, registry: &Registry) -> Result<IdentifyOutput> {
    if target.is_classification() {
        bail!("identification needs a geometry target (depth, width or length)");
    }
    let ds = load_dataset(dataset).with_context(|| format!("loading {}", dataset.display()))?;
    let (x, y, _) = covariates_from_dataset(&ds, target, registry, ambient_temp)?;
    let model = fit_power_law(&x, &y, &FitConfig::default())?;
    let lhs = match target {
        Target::Depth => "D",
        Target::Width => "W",
        _ => "L",
    };
    Ok(IdentifyOutput {
        target,
        n: x.len(),
        equation: model.render(lhs),
        w0: model.w0,
        exponents: COVARIATES.iter().map(|c| c.to_string()).zip(model.exponents()).collect(),
        r2: model.r2,
        constraint_residual: model.constraint_residual,
        low_confidence: model.low_confidence,
    })
}

#[derive(Debug, Serialize)]
pub struct RosenthalOutput {
    pub material: String,
    pub absorbed_power_w: f64,
    pub velocity_m_s: f64,
    pub ambient_temp: f64,
    pub geometry_constant: f64,
    #[serde(flatten)]
    pub geometry: RosenthalGeometry,
}

pub fn rosenthal(
    material: &str,
    absorbed_power: f64,
    velocity: f64,
    ambient_temp: f64,
    registry: &Registry,
) -> Result<RosenthalOutput> {
    let spec = registry.lookup_material(material)?;
    let thermal = spec.thermal()?;
    let a = geometry_constant(&spec.name);
    Ok(RosenthalOutput {
        material: spec.name.clone(),
        absorbed_power_w: absorbed_power,
        velocity_m_s: velocity,
        ambient_temp,
        geometry_constant: a,
        geometry: rosenthal_geometry(absorbed_power, velocity, thermal, ambient_temp, a)?,
    })
}

/// Output path: `--out` if given, else `name` under the config's output
/// directory.
pub fn out_path(cfg: &RunConfig, out: Option<&Path>, name: &str) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join(name))
}

pub fn task_of(target: Target) -> Task {
    if target.is_classification() {
        Task::Classification
    } else {
        Task::Regression
    }
}
