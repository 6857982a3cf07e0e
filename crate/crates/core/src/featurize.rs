//! Design-matrix assembly from records.
//!
//! A [`FeatureSpec`] names feature groups; [`assemble`] drops records that
//! lack any field the groups need, then lays the columns out in a fixed
//! order: process one-hot, beam power, scan speed, beam diameter, thermal
//! properties, followed by the remaining groups in the order the `FeatureSpec` lists
//! them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DefectClass, Field, MeltpoolRecord, Process};
use crate::error::{Error, Result};
use crate::materials::{ElementProperty, MaterialSpec, Registry, ThermalProps, ELEMENT_ORDER};
use crate::matrix::Matrix;

pub const DEFAULT_AMBIENT_TEMP: f64 = 298.15;
pub const DEFAULT_MIN_ABSORPTIVITY: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    ProcessOneHot,
    BeamPower,
    ScanSpeed,
    BeamDiameter,
    ThermalProps,
    MaterialOneHot,
    ChemicalComposition,
    ElementalFeatures,
    HatchSpacing,
    LayerThickness,
    Absorptivity1,
    Absorptivity2,
}

impl FeatureGroup {
    const LEADING: [FeatureGroup; 5] = [
        FeatureGroup::ProcessOneHot,
        FeatureGroup::BeamPower,
        FeatureGroup::ScanSpeed,
        FeatureGroup::BeamDiameter,
        FeatureGroup::ThermalProps,
    ];

    fn required_field(self) -> Option<Field> {
        match self {
            FeatureGroup::BeamDiameter | FeatureGroup::Absorptivity1 => Some(Field::BeamDiameter),
            FeatureGroup::Absorptivity2 => Some(Field::Width),
            FeatureGroup::HatchSpacing => Some(Field::HatchSpacing),
            FeatureGroup::LayerThickness => Some(Field::LayerThickness),
            _ => None,
        }
    }

    fn needs_thermal(self) -> bool {
        matches!(
            self,
            FeatureGroup::ThermalProps | FeatureGroup::Absorptivity1 | FeatureGroup::Absorptivity2
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Depth,
    Width,
    Length,
    DefectClass,
}

impl Target {
    pub fn field(self) -> Field {
        match self {
            Target::Depth => Field::Depth,
            Target::Width => Field::Width,
            Target::Length => Field::Length,
            Target::DefectClass => Field::DefectClass,
        }
    }

    pub fn is_classification(self) -> bool {
        self == Target::DefectClass
    }

    pub fn name(self) -> &'static str {
        self.field().name()
    }
}

fn default_ambient() -> f64 {
    DEFAULT_AMBIENT_TEMP
}

fn default_min_absorptivity() -> f64 {
    DEFAULT_MIN_ABSORPTIVITY
}

/// Declarative feature selection. Serialized as JSON with snake_case group
/// names, e.g. `{"groups": ["process_one_hot", "beam_power"], "target": "depth"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub groups: Vec<FeatureGroup>,
    pub target: Target,
    /// Far-field temperature T0, K.
    #[serde(default = "default_ambient")]
    pub ambient_temp: f64,
    /// Flat-surface absorptivity used by absorptivity 1.
    #[serde(default = "default_min_absorptivity")]
    pub min_absorptivity: f64,
    /// Per-material overrides of `min_absorptivity`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub min_absorptivity_by_material: BTreeMap<String, f64>,
}

impl FeatureSpec {
    /// Process one-hot, power, speed and the four thermal properties; beam
    /// diameter is added for the classification target.
    pub fn baseline(target: Target) -> Self {
        let mut groups = vec![
            FeatureGroup::ProcessOneHot,
            FeatureGroup::BeamPower,
            FeatureGroup::ScanSpeed,
            FeatureGroup::ThermalProps,
        ];
        if target.is_classification() {
            groups.insert(3, FeatureGroup::BeamDiameter);
        }
        FeatureSpec {
            groups,
            target,
            ambient_temp: DEFAULT_AMBIENT_TEMP,
            min_absorptivity: DEFAULT_MIN_ABSORPTIVITY,
            min_absorptivity_by_material: BTreeMap::new(),
        }
    }

    pub fn with(mut self, group: FeatureGroup) -> Self {
        if !self.groups.contains(&group) {
            self.groups.push(group);
        }
        self
    }

    pub fn has(&self, group: FeatureGroup) -> bool {
        self.layout().contains(&group)
    }

    /// Groups in column order, deduplicated, with the classification rule
    /// applied.
    pub fn layout(&self) -> Vec<FeatureGroup> {
        let mut out: Vec<FeatureGroup> = FeatureGroup::LEADING
            .iter()
            .copied()
            .filter(|g| {
                self.groups.contains(g)
                    || (*g == FeatureGroup::BeamDiameter && self.target.is_classification())
            })
            .collect();
        for g in &self.groups {
            if !out.contains(g) {
                out.push(*g);
            }
        }
        out
    }

    pub fn min_absorptivity_for(&self, material: &str) -> f64 {
        self.min_absorptivity_by_material
            .get(material)
            .copied()
            .unwrap_or(self.min_absorptivity)
    }

    /// Record fields needed to compute the features (target excluded).
    pub fn required_fields(&self) -> Vec<Field> {
        let mut out: Vec<Field> = Vec::new();
        for g in self.layout() {
            if let Some(f) = g.required_field() {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
        }
        out
    }

    pub fn needs_thermal(&self) -> bool {
        self.layout().iter().any(|g| g.needs_thermal())
    }

    pub fn column_names(&self, registry: &Registry) -> Vec<String> {
        let mut cols = Vec::new();
        for g in self.layout() {
            match g {
                FeatureGroup::ProcessOneHot => {
                    cols.extend(Process::ALL.iter().map(|p| format!("process_{}", p.token())))
                }
                FeatureGroup::BeamPower => cols.push("power_w".into()),
                FeatureGroup::ScanSpeed => cols.push("velocity_m_s".into()),
                FeatureGroup::BeamDiameter => cols.push("beam_diameter_m".into()),
                FeatureGroup::ThermalProps => cols.extend(
                    ["density", "specific_heat", "conductivity", "melting_temp"].map(String::from),
                ),
                FeatureGroup::MaterialOneHot => {
                    cols.extend(registry.material_names().map(|m| format!("material_{m}")))
                }
                FeatureGroup::ChemicalComposition => {
                    cols.extend(ELEMENT_ORDER.iter().map(|e| format!("wt_{e}")))
                }
                FeatureGroup::ElementalFeatures => cols.extend(
                    ElementProperty::ALL
                        .iter()
                        .map(|p| format!("elem_{}", p.name())),
                ),
                FeatureGroup::HatchSpacing => cols.push("hatch_spacing_m".into()),
                FeatureGroup::LayerThickness => cols.push("layer_thickness_m".into()),
                FeatureGroup::Absorptivity1 => cols.push("absorptivity1".into()),
                FeatureGroup::Absorptivity2 => cols.push("absorptivity2".into()),
            }
        }
        cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Argument("feature spec has no groups".into()));
        }
        if !(self.ambient_temp > 0.0 && self.ambient_temp.is_finite()) {
            return Err(Error::Argument(format!(
                "ambient temperature must be > 0 K, got {}",
                self.ambient_temp
            )));
        }
        let etas = std::iter::once(&self.min_absorptivity).chain(self.min_absorptivity_by_material.values());
        for &eta in etas {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Argument(format!(
                    "minimum absorptivity must lie in (0, 1], got {eta}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// Meters.
    Regression(Vec<f64>),
    /// [`DefectClass`] ids.
    Classification(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(v) => v.len(),
            Targets::Classification(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Regression(v) => Targets::Regression(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classification(v) => {
                Targets::Classification(idx.iter().map(|&i| v[i]).collect())
            }
        }
    }
}

/// Numeric design matrix plus column metadata and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub columns: Vec<String>,
    /// Index of each row's source record in the dataset.
    pub row_index: Vec<usize>,
    pub targets: Targets,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select_rows(idx),
            columns: self.columns.clone(),
            row_index: idx.iter().map(|&i| self.row_index[i]).collect(),
            targets: self.targets.select(idx),
        }
    }

    pub fn column_position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Binary indicator columns for `values` over an ordered category set.
pub fn one_hot<S: AsRef<str>>(values: &[S], categories: &[S]) -> Result<Vec<Vec<f64>>> {
    values
        .iter()
        .map(|v| {
            let v = v.as_ref();
            let k = categories
                .iter()
                .position(|c| c.as_ref() == v)
                .ok_or_else(|| Error::Encoding {
                    value: v.to_string(),
                    categories: categories.iter().map(|c| c.as_ref().to_string()).collect(),
                })?;
            let mut row = vec![0.0; categories.len()];
            row[k] = 1.0;
            Ok(row)
        })
        .collect()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {v}")))
    }
}

fn melt_superheat(thermal: &ThermalProps, ambient_temp: f64) -> Result<f64> {
    let dt = thermal.melting_temp - ambient_temp;
    if dt > 0.0 {
        Ok(dt)
    } else {
        Err(Error::Domain(format!(
            "melting temperature {} K must exceed ambient {ambient_temp} K",
            thermal.melting_temp
        )))
    }
}

/// Keyhole-regime absorptivity:
/// `0.7 · (1 − exp(−0.6 η_m P / ((T_m − T0) π ρ C_p V r0²)))`.
///
/// `beam_radius` is half the beam diameter. The result lies in `(0, 0.7)`.
/// Past an exponent of roughly 37 the exact value is closer to 0.7 than
/// to any double below it; it is then rounded down to the largest double
/// under 0.7 rather than up onto the bound.
pub fn absorptivity1(
    power: f64,
    velocity: f64,
    beam_radius: f64,
    thermal: &ThermalProps,
    ambient_temp: f64,
    min_absorptivity: f64,
) -> Result<f64> {
    check_positive("power", power)?;
    check_positive("velocity", velocity)?;
    check_positive("beam radius", beam_radius)?;
    check_positive("minimum absorptivity", min_absorptivity)?;
    let dt = melt_superheat(thermal, ambient_temp)?;
    let x = 0.6 * min_absorptivity * power
        / (dt
            * std::f64::consts::PI
            * thermal.density
            * thermal.specific_heat
            * velocity
            * beam_radius
            * beam_radius);
    Ok((-0.7 * (-x).exp_m1()).min(0.7_f64.next_down()))
}

/// Conduction-regime absorptivity from a measured meltpool width:
/// `(π k (T_m − T0) W + e π ρ C_p (T_m − T0) V W² / 8) / P`.
pub fn absorptivity2(
    power: f64,
    velocity: f64,
    width: f64,
    thermal: &ThermalProps,
    ambient_temp: f64,
) -> Result<f64> {
    check_positive("power", power)?;
    check_positive("velocity", velocity)?;
    check_positive("width", width)?;
    let dt = melt_superheat(thermal, ambient_temp)?;
    let pi = std::f64::consts::PI;
    let conduction = pi * thermal.conductivity * dt * width;
    let advection = std::f64::consts::E * pi * thermal.density * thermal.specific_heat * dt
        * velocity
        * width
        * width
        / 8.0;
    Ok((conduction + advection) / power)
}

/// Computes one feature row for `record`. Fails if a needed field is
/// missing or the material cannot supply a needed property.
pub fn feature_row(record: &MeltpoolRecord, spec: &FeatureSpec, registry: &Registry) -> Result<Vec<f64>> {
    let material = registry.lookup_material(&record.material)?;
    let mut row = Vec::new();
    for g in spec.layout() {
        push_group(&mut row, g, record, material, spec, registry)?;
    }
    Ok(row)
}

fn need(v: Option<f64>, field: Field) -> Result<f64> {
    v.ok_or_else(|| Error::FeatureAvailability(field.name().to_string()))
}

fn push_group(
    row: &mut Vec<f64>,
    group: FeatureGroup,
    r: &MeltpoolRecord,
    material: &MaterialSpec,
    spec: &FeatureSpec,
    registry: &Registry,
) -> Result<()> {
    match group {
        FeatureGroup::ProcessOneHot => {
            row.extend(Process::ALL.iter().map(|p| f64::from(u8::from(*p == r.process))))
        }
        FeatureGroup::BeamPower => row.push(r.power),
        FeatureGroup::ScanSpeed => row.push(r.velocity),
        FeatureGroup::BeamDiameter => row.push(need(r.beam_diameter, Field::BeamDiameter)?),
        FeatureGroup::ThermalProps => {
            let t = material.thermal()?;
            row.extend([t.density, t.specific_heat, t.conductivity, t.melting_temp]);
        }
        FeatureGroup::MaterialOneHot => {
            row.extend(registry.material_names().map(|m| f64::from(u8::from(m == material.name))))
        }
        FeatureGroup::ChemicalComposition => {
            row.extend(ELEMENT_ORDER.iter().map(|e| material.fraction(e)))
        }
        FeatureGroup::ElementalFeatures => row.extend(registry.elemental_feature_vector(material)?),
        FeatureGroup::HatchSpacing => row.push(need(r.hatch_spacing, Field::HatchSpacing)?),
        FeatureGroup::LayerThickness => row.push(need(r.layer_thickness, Field::LayerThickness)?),
        FeatureGroup::Absorptivity1 => {
            let d = need(r.beam_diameter, Field::BeamDiameter)?;
            row.push(absorptivity1(
                r.power,
                r.velocity,
                d / 2.0,
                material.thermal()?,
                spec.ambient_temp,
                spec.min_absorptivity_for(&material.name),
            )?);
        }
        FeatureGroup::Absorptivity2 => {
            let w = need(r.width, Field::Width)?;
            row.push(absorptivity2(
                r.power,
                r.velocity,
                w,
                material.thermal()?,
                spec.ambient_temp,
            )?);
        }
    }
    Ok(())
}

fn target_value(r: &MeltpoolRecord, target: Target) -> Option<f64> {
    match target {
        Target::Depth => r.depth,
        Target::Width => r.width,
        Target::Length => r.length,
        Target::DefectClass => r.defect_class.map(|c| c.id() as f64),
    }
}

/// Builds the design matrix for `spec` over the labeled, complete records
/// of `ds`.
pub fn assemble(ds: &Dataset, spec: &FeatureSpec, registry: &Registry) -> Result<FeatureMatrix> {
    spec.validate()?;
    if spec.target == Target::Width && spec.has(FeatureGroup::Absorptivity2) {
        log::warn!(
            "absorptivity2 is computed from the measured width; using it to predict width leaks the label"
        );
    }

    // Each constraint is applied in turn so an empty result can name the
    // one that removed the last row.
    let mut constraints: Vec<(String, Box<dyn Fn(&MeltpoolRecord) -> bool>)> = Vec::new();
    let target_field = spec.target.field();
    constraints.push((
        format!("target `{}` present", target_field.name()),
        Box::new(move |r| r.has(target_field)),
    ));
    for f in spec.required_fields() {
        constraints.push((format!("field `{}` present", f.name()), Box::new(move |r| r.has(f))));
    }
    if spec.needs_thermal() {
        // Unknown materials pass here and fail loudly in feature_row.
        constraints.push((
            "material has thermal properties".into(),
            Box::new(|r| {
                registry
                    .lookup_material(&r.material)
                    .map_or(true, |m| m.thermal.is_some())
            }),
        ));
    }

    let mut keep: Vec<usize> = (0..ds.len()).collect();
    for (name, pred) in &constraints {
        let before = keep.len();
        keep.retain(|&i| pred(&ds.records[i]));
        if keep.is_empty() {
            return Err(Error::EmptyMatrix(if before == 0 {
                "dataset is empty".to_string()
            } else {
                name.clone()
            }));
        }
    }

    let columns = spec.column_names(registry);
    let mut data = Vec::with_capacity(keep.len() * columns.len());
    let mut reg_targets = Vec::new();
    let mut cls_targets = Vec::new();
    for &i in &keep {
        let r = &ds.records[i];
        let row = feature_row(r, spec, registry)?;
        debug_assert_eq!(row.len(), columns.len());
        data.extend(row);
        let t = target_value(r, spec.target).expect("filtered on target");
        if spec.target.is_classification() {
            cls_targets.push(t as usize);
        } else {
            reg_targets.push(t);
        }
    }
    let targets = if spec.target.is_classification() {
        debug_assert!(cls_targets.iter().all(|&c| c < DefectClass::COUNT));
        Targets::Classification(cls_targets)
    } else {
        Targets::Regression(reg_targets)
    };
    Ok(FeatureMatrix {
        values: Matrix::from_vec(keep.len(), columns.len(), data)?,
        columns,
        row_index: keep,
        targets,
    })
}
