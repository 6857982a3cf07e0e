//! JSON request and response bodies shared by `mpnet predict` and the HTTP
//! service. Lengths are in micrometers on the wire.

use meltpoolnet::analytical::{geometry_constant, rosenthal_geometry, RosenthalGeometry};
use meltpoolnet::data::{DefectClass, MeltpoolRecord, Process};
use meltpoolnet::featurize::{absorptivity1, FeatureGroup, Target};
use meltpoolnet::materials::Registry;
use meltpoolnet::pipeline::{Pipeline, Prediction, ProcessMap};
use serde::{Deserialize, Serialize};

const UM: f64 = 1e-6;

/// Process-map cells per axis are capped to keep requests cheap.
pub const MAX_RESOLUTION: usize = 256;

pub const DEFAULT_BEAM_DIAMETER_UM: f64 = 100.0;
pub const DEFAULT_LAYER_THICKNESS_UM: f64 = 40.0;
pub const DEFAULT_HATCH_SPACING_UM: f64 = 100.0;

fn lpbf() -> Process {
    Process::Lpbf
}

/// One set of process inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordInput {
    #[serde(default = "lpbf")]
    pub process: Process,
    pub material: String,
    pub power_w: f64,
    pub velocity_m_s: f64,
    #[serde(default)]
    pub beam_diameter_um: Option<f64>,
    #[serde(default)]
    pub layer_thickness_um: Option<f64>,
    #[serde(default)]
    pub hatch_spacing_um: Option<f64>,
}

impl RecordInput {
    pub fn to_record(&self) -> MeltpoolRecord {
        MeltpoolRecord {
            source_id: "request".into(),
            process: self.process,
            material: self.material.clone(),
            power: self.power_w,
            velocity: self.velocity_m_s,
            beam_diameter: self.beam_diameter_um.map(|v| v * UM),
            layer_thickness: self.layer_thickness_um.map(|v| v * UM),
            hatch_spacing: self.hatch_spacing_um.map(|v| v * UM),
            depth: None,
            width: None,
            length: None,
            defect_class: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model: String,
    #[serde(flatten)]
    pub input: RecordInput,
}

impl PredictRequest {
    /// Like `serde_json::from_value`, but errors name the offending field,
    /// which the flattened layout would otherwise hide.
    pub fn from_value(mut v: serde_json::Value) -> Result<PredictRequest, String> {
        let obj = v.as_object_mut().ok_or("expected a JSON object")?;
        let model = match obj.remove("model") {
            Some(serde_json::Value::String(m)) => m,
            Some(other) => return Err(format!("model: expected a string, got {other}")),
            None => return Err("missing field `model`".into()),
        };
        let input: RecordInput =
            serde_path_to_error::deserialize(v).map_err(|e| match e.path().to_string().as_str() {
                "." => e.inner().to_string(),
                path => format!("{path}: {}", e.inner()),
            })?;
        Ok(PredictRequest { model, input })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub desirable: f64,
    pub keyhole: f64,
    pub lack_of_fusion: f64,
    pub balling: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect_class: Option<DefectClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<ClassProbs>,
    /// `null` when the alloy has no thermal data.
    pub rosenthal: Option<RosenthalGeometry>,
}

/// Serving cannot supply a measured width, so models built on it are
/// refused.
pub fn check_servable(pipeline: &Pipeline) -> Result<(), String> {
    if pipeline.spec.has(FeatureGroup::Absorptivity2) {
        Err("model uses absorptivity2, which needs the measured meltpool width".into())
    } else {
        Ok(())
    }
}

/// Rosenthal estimate for the request. The absorbed power uses
/// absorptivity 1 when a beam diameter is given and the flat-surface
/// absorptivity η_m otherwise.
pub fn rosenthal_for(
    input: &RecordInput,
    pipeline: &Pipeline,
    registry: &Registry,
) -> meltpoolnet::Result<Option<RosenthalGeometry>> {
    let spec = registry.lookup_material(&input.material)?;
    let Some(thermal) = &spec.thermal else {
        return Ok(None);
    };
    let t0 = pipeline.spec.ambient_temp;
    let eta_m = pipeline.spec.min_absorptivity_for(&input.material);
    let eta = match input.beam_diameter_um {
        Some(d) => absorptivity1(input.power_w, input.velocity_m_s, d * UM / 2.0, thermal, t0, eta_m)?,
        None => eta_m,
    };
    rosenthal_geometry(eta * input.power_w, input.velocity_m_s, thermal, t0, geometry_constant(&spec.name)).map(Some)
}

pub fn predict(pipeline: &Pipeline, input: &RecordInput, registry: &Registry) -> meltpoolnet::Result<PredictResponse> {
    let prediction = pipeline.predict_record(&input.to_record(), registry)?;
    let mut out = PredictResponse {
        depth_um: None,
        width_um: None,
        length_um: None,
        defect_class: None,
        class_probs: None,
        rosenthal: rosenthal_for(input, pipeline, registry)?,
    };
    match prediction {
        Prediction::Value(v) => {
            let um = v / UM;
            match pipeline.target() {
                Target::Depth => out.depth_um = Some(um),
                Target::Width => out.width_um = Some(um),
                Target::Length => out.length_um = Some(um),
                Target::DefectClass => unreachable!("classifier returns classes"),
            }
        }
        Prediction::Class { id, proba } => {
            out.defect_class = DefectClass::from_id(id);
            out.class_probs = Some(ClassProbs {
                desirable: proba[DefectClass::Desirable.id()],
                keyhole: proba[DefectClass::Keyhole.id()],
                lack_of_fusion: proba[DefectClass::LackOfFusion.id()],
                balling: proba[DefectClass::Balling.id()],
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedFields {
    #[serde(default)]
    pub process: Option<Process>,
    #[serde(default)]
    pub beam_diameter_um: Option<f64>,
    #[serde(default)]
    pub layer_thickness_um: Option<f64>,
    #[serde(default)]
    pub hatch_spacing_um: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessMapRequest {
    pub model: String,
    pub material: String,
    pub p_range: [f64; 2],
    pub v_range: [f64; 2],
    pub resolution: usize,
    #[serde(default)]
    pub fixed: FixedFields,
}

impl ProcessMapRequest {
    /// The record every grid cell starts from; unset fields take the
    /// defaults above.
    pub fn base_record(&self) -> MeltpoolRecord {
        RecordInput {
            process: self.fixed.process.unwrap_or(Process::Lpbf),
            material: self.material.clone(),
            power_w: self.p_range[0],
            velocity_m_s: self.v_range[0],
            beam_diameter_um: Some(self.fixed.beam_diameter_um.unwrap_or(DEFAULT_BEAM_DIAMETER_UM)),
            layer_thickness_um: Some(self.fixed.layer_thickness_um.unwrap_or(DEFAULT_LAYER_THICKNESS_UM)),
            hatch_spacing_um: Some(self.fixed.hatch_spacing_um.unwrap_or(DEFAULT_HATCH_SPACING_UM)),
        }
        .to_record()
    }
}

pub type ProcessMapResponse = ProcessMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialInfo {
    pub name: String,
    pub rho: Option<f64>,
    pub cp: Option<f64>,
    pub k: Option<f64>,
    pub tm: Option<f64>,
}

pub fn materials(registry: &Registry) -> Vec<MaterialInfo> {
    registry
        .materials()
        .map(|m| MaterialInfo {
            name: m.name.clone(),
            rho: m.thermal.map(|t| t.density),
            cp: m.thermal.map(|t| t.specific_heat),
            k: m.thermal.map(|t| t.conductivity),
            tm: m.thermal.map(|t| t.melting_temp),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub kind: meltpoolnet::learners::ModelKind,
    pub target: Target,
    pub features: Vec<FeatureGroup>,
}

impl ModelInfo {
    pub fn of(name: &str, p: &Pipeline) -> ModelInfo {
        ModelInfo {
            name: name.into(),
            kind: p.kind(),
            target: p.target(),
            features: p.spec.layout(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
