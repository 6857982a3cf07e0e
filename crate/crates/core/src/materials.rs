//! Alloy registry and elemental featurization.
//!
//! Compositions are stored as weight fractions renormalized to sum to one;
//! several tabulated alloys do not add up to exactly 100 wt%. Alloy-level
//! elemental features follow the linear mixture rule
//!
//! ```text
//! feature(alloy) = Σ_j  fraction_j · feature(element_j)
//! ```
//!
//! Bundled data lives in `data/materials.csv` and `data/elements.csv`; a
//! directory with files of the same names can replace it (see
//! [`Registry::from_dir`]).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_MATERIALS: &str = include_str!("../data/materials.csv");
const BUNDLED_ELEMENTS: &str = include_str!("../data/elements.csv");

/// Element symbols in the column order of the composition table.
pub const ELEMENT_ORDER: [&str; 19] = [
    "Y", "Zn", "Mg", "Si", "Al", "Sn", "Zr", "W", "Ti", "V", "Co", "Cu", "Ta", "Nb", "Ni", "Cr",
    "Fe", "Mn", "Mo",
];

/// Thermal properties in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalProps {
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// W/(m·K)
    pub conductivity: f64,
    /// K
    pub melting_temp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub name: String,
    /// Element symbol and weight fraction, nonzero entries only, in
    /// [`ELEMENT_ORDER`].
    pub composition: Vec<(String, f64)>,
    /// Absent for alloys with a known composition but no tabulated
    /// thermal data.
    pub thermal: Option<ThermalProps>,
}

impl MaterialSpec {
    /// Builds a spec from raw weights, renormalizing them to fractions.
    pub fn new(
        name: impl Into<String>,
        weights: &[(&str, f64)],
        thermal: Option<ThermalProps>,
    ) -> Result<Self> {
        let name = name.into();
        if weights.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!("{name}: negative or non-finite weight")));
        }
        if let Some(t) = thermal {
            let ok = [t.density, t.specific_heat, t.conductivity]
                .iter()
                .all(|v| *v > 0.0 && v.is_finite())
                && t.melting_temp > 273.0;
            if !ok {
                return Err(Error::Domain(format!("{name}: invalid thermal properties")));
            }
        }
        let composition = renormalize(
            weights
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(s, w)| (s.to_string(), *w))
                .collect(),
        )
        .ok_or_else(|| Error::Domain(format!("{name}: composition is empty")))?;
        Ok(MaterialSpec {
            name,
            composition,
            thermal,
        })
    }

    pub fn thermal(&self) -> Result<&ThermalProps> {
        self.thermal
            .as_ref()
            .ok_or_else(|| Error::MissingThermal(self.name.clone()))
    }

    /// Weight fraction of `symbol` (0 when absent).
    pub fn fraction(&self, symbol: &str) -> f64 {
        self.composition
            .iter()
            .find(|(s, _)| s == symbol)
            .map_or(0.0, |(_, f)| *f)
    }
}

/// Scales weights so they sum to one. `None` if they sum to zero.
pub fn renormalize(mut composition: Vec<(String, f64)>) -> Option<Vec<(String, f64)>> {
    let total: f64 = composition.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return None;
    }
    for (_, w) in composition.iter_mut() {
        *w /= total;
    }
    Some(composition)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementProperty {
    AtomicNumber,
    AtomicVolume,
    IonizationEnergy,
    HeatOfFusion,
    ElectronAffinity,
}

impl ElementProperty {
    pub const ALL: [ElementProperty; 5] = [
        ElementProperty::AtomicNumber,
        ElementProperty::AtomicVolume,
        ElementProperty::IonizationEnergy,
        ElementProperty::HeatOfFusion,
        ElementProperty::ElectronAffinity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElementProperty::AtomicNumber => "atomic_number",
            ElementProperty::AtomicVolume => "atomic_volume",
            ElementProperty::IonizationEnergy => "ionization_energy",
            ElementProperty::HeatOfFusion => "heat_of_fusion",
            ElementProperty::ElectronAffinity => "electron_affinity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementProps {
    pub symbol: String,
    pub atomic_number: u32,
    /// cm³/mol
    pub atomic_volume: Option<f64>,
    /// First ionization energy, eV
    pub ionization_energy: Option<f64>,
    /// kJ/mol
    pub heat_of_fusion: Option<f64>,
    /// eV
    pub electron_affinity: Option<f64>,
}

impl ElementProps {
    pub fn get(&self, property: ElementProperty) -> Option<f64> {
        match property {
            ElementProperty::AtomicNumber => Some(f64::from(self.atomic_number)),
            ElementProperty::AtomicVolume => self.atomic_volume,
            ElementProperty::IonizationEnergy => self.ionization_energy,
            ElementProperty::HeatOfFusion => self.heat_of_fusion,
            ElementProperty::ElectronAffinity => self.electron_affinity,
        }
    }
}

/// Immutable alloy and element tables.
#[derive(Clone, Debug)]
pub struct Registry {
    materials: BTreeMap<String, MaterialSpec>,
    elements: BTreeMap<String, ElementProps>,
}

impl Registry {
    /// The tables compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_csv(BUNDLED_MATERIALS, BUNDLED_ELEMENTS)
            .expect("bundled material tables are valid")
    }

    /// Reads `materials.csv` and `elements.csv` from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        Self::from_csv(&read("materials.csv")?, &read("elements.csv")?)
    }

    /// Uses `MPNET_DATA_DIR` when set, the bundled tables otherwise.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os("MPNET_DATA_DIR") {
            Some(dir) => Self::from_dir(dir),
            None => Ok(Self::bundled()),
        }
    }

    pub fn from_csv(materials_csv: &str, elements_csv: &str) -> Result<Self> {
        Ok(Registry {
            materials: parse_materials(materials_csv)?,
            elements: parse_elements(elements_csv)?,
        })
    }

    pub fn lookup_material(&self, name: &str) -> Result<&MaterialSpec> {
        self.materials
            .get(name)
            .ok_or_else(|| Error::UnknownMaterial {
                name: name.to_string(),
                known: self.material_names().collect::<Vec<_>>().join(", "),
            })
    }

    /// Names in alphabetical order.
    pub fn material_names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    pub fn materials(&self) -> impl Iterator<Item = &MaterialSpec> {
        self.materials.values()
    }

    pub fn element(&self, symbol: &str) -> Option<&ElementProps> {
        self.elements.get(symbol)
    }

    pub fn elements(&self) -> impl Iterator<Item = &ElementProps> {
        self.elements.values()
    }

    /// Composition-weighted sum of an element property.
    pub fn mixture_feature(&self, spec: &MaterialSpec, property: ElementProperty) -> Result<f64> {
        let mut total = 0.0;
        for (symbol, fraction) in &spec.composition {
            let value = self
                .elements
                .get(symbol)
                .and_then(|e| e.get(property))
                .ok_or_else(|| Error::Coverage {
                    element: symbol.clone(),
                    property: property.name().to_string(),
                })?;
            total += fraction * value;
        }
        Ok(total)
    }

    /// The five mixture features in [`ElementProperty::ALL`] order.
    pub fn elemental_feature_vector(&self, spec: &MaterialSpec) -> Result<[f64; 5]> {
        let mut out = [0.0; 5];
        for (slot, p) in out.iter_mut().zip(ElementProperty::ALL) {
            *slot = self.mixture_feature(spec, p)?;
        }
        Ok(out)
    }
}

fn parse_optional(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Domain(format!("{what}: `{s}` is not numeric")))
}

fn parse_materials(text: &str) -> Result<BTreeMap<String, MaterialSpec>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let name_col = col("name")?;
    let element_cols: Vec<(usize, &str)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| ELEMENT_ORDER.contains(h))
        .map(|(i, h)| (i, *ELEMENT_ORDER.iter().find(|e| *e == &h).unwrap()))
        .collect();
    let thermal_cols = [
        col("density_kg_m3")?,
        col("specific_heat_j_kg_k")?,
        col("conductivity_w_m_k")?,
        col("melting_temp_k")?,
    ];

    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let name = row.get(name_col).unwrap_or("").to_string();
        let mut weights = Vec::new();
        for &(i, symbol) in &element_cols {
            let w = parse_optional(row.get(i).unwrap_or(""), &name)?.unwrap_or(0.0);
            weights.push((symbol, w));
        }
        let t: Vec<Option<f64>> = thermal_cols
            .iter()
            .map(|&i| parse_optional(row.get(i).unwrap_or(""), &name))
            .collect::<Result<_>>()?;
        let thermal = match (t[0], t[1], t[2], t[3]) {
            (Some(density), Some(specific_heat), Some(conductivity), Some(melting_temp)) => {
                Some(ThermalProps {
                    density,
                    specific_heat,
                    conductivity,
                    melting_temp,
                })
            }
            (None, None, None, None) => None,
            _ => {
                return Err(Error::Domain(format!(
                    "{name}: thermal properties must be all present or all empty"
                )))
            }
        };
        let spec = MaterialSpec::new(name.clone(), &weights, thermal)?;
        out.insert(name, spec);
    }
    Ok(out)
}

fn parse_elements(text: &str) -> Result<BTreeMap<String, ElementProps>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let symbol = field(0).to_string();
        let atomic_number: u32 = field(1)
            .parse()
            .map_err(|_| Error::Domain(format!("{symbol}: bad atomic number")))?;
        if atomic_number == 0 {
            return Err(Error::Domain(format!("{symbol}: atomic number must be >= 1")));
        }
        let props = ElementProps {
            atomic_number,
            atomic_volume: parse_optional(field(2), &symbol)?,
            ionization_energy: parse_optional(field(3), &symbol)?,
            heat_of_fusion: parse_optional(field(4), &symbol)?,
            electron_affinity: parse_optional(field(5), &symbol)?,
            symbol: symbol.clone(),
        };
        out.insert(symbol, props);
    }
    Ok(out)
}
