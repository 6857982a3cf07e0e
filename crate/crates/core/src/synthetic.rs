//! Physics-based synthetic meltpool records.
//!
//! Geometry follows the Rosenthal solution with `Q = η·P`, optionally
//! deepened in the keyhole regime, with multiplicative log-normal noise.
//! Defect labels come from geometric rules evaluated on the noiseless
//! geometry, in this order:
//!
//! 1. keyhole when depth exceeds half the width;
//! 2. lack of fusion when depth is below the layer thickness;
//! 3. balling when length over width exceeds a threshold;
//! 4. desirable otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analytical::{geometry_constant, rosenthal_depth, rosenthal_length};
use crate::data::{Dataset, DefectClass, MeltpoolRecord, Process};
use crate::error::{Error, Result};
use crate::featurize::DEFAULT_AMBIENT_TEMP;
use crate::materials::{Registry, ThermalProps};

/// Sampling ranges for one process, all SI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessWindow {
    pub process: Process,
    pub absorptivity: f64,
    pub power: (f64, f64),
    pub velocity: (f64, f64),
    pub beam_diameter: (f64, f64),
    pub layer_thickness: (f64, f64),
    pub hatch_spacing: (f64, f64),
}

impl ProcessWindow {
    pub fn lpbf() -> Self {
        ProcessWindow {
            process: Process::Lpbf,
            absorptivity: 0.4,
            power: (50.0, 400.0),
            velocity: (0.2, 2.0),
            beam_diameter: (50e-6, 150e-6),
            layer_thickness: (20e-6, 80e-6),
            hatch_spacing: (60e-6, 140e-6),
        }
    }

    pub fn epbf() -> Self {
        ProcessWindow {
            process: Process::Epbf,
            absorptivity: 0.8,
            power: (300.0, 1500.0),
            velocity: (0.5, 4.0),
            beam_diameter: (200e-6, 400e-6),
            layer_thickness: (50e-6, 100e-6),
            hatch_spacing: (100e-6, 200e-6),
        }
    }

    pub fn lens() -> Self {
        ProcessWindow {
            process: Process::Lens,
            absorptivity: 0.35,
            power: (200.0, 1000.0),
            velocity: (0.005, 0.02),
            beam_diameter: (500e-6, 1500e-6),
            layer_thickness: (200e-6, 500e-6),
            hatch_spacing: (400e-6, 1000e-6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    pub materials: Vec<String>,
    /// Chosen uniformly per record.
    pub windows: Vec<ProcessWindow>,
    pub ambient_temp: f64,
    /// Standard deviation of the log-normal factor applied to each
    /// geometry label.
    pub noise: f64,
    /// Normalized-enthalpy level above which the keyhole deepens the pool;
    /// `None` keeps pure conduction-mode geometry.
    pub keyhole_threshold: Option<f64>,
    /// Length-to-width ratio above which a track balls up.
    pub balling_ratio: f64,
    /// Probability that each optional field is blanked.
    pub missing_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 500,
            seed: 0,
            materials: DEFAULT_MATERIALS.iter().map(|s| s.to_string()).collect(),
            windows: vec![ProcessWindow::lpbf()],
            ambient_temp: DEFAULT_AMBIENT_TEMP,
            noise: 0.0,
            keyhole_threshold: Some(15.0),
            balling_ratio: 6.0,
            missing_rate: 0.0,
        }
    }
}

/// Six common powder-bed alloys with full thermal data.
pub const DEFAULT_MATERIALS: [&str; 6] = ["SS316L", "Ti-6Al-4V", "IN718", "IN625", "SS17-4PH", "Hastelloy X"];

/// `ηP / (π ρ C_p ΔT √(κ V r³))` with diffusivity `κ = k / (ρ C_p)` and
/// beam radius `r`.
pub fn normalized_enthalpy(absorbed_power: f64, velocity: f64, beam_radius: f64, t: &ThermalProps, ambient_temp: f64) -> f64 {
    let rho_cp = t.density * t.specific_heat;
    let kappa = t.conductivity / rho_cp;
    absorbed_power
        / (std::f64::consts::PI
            * rho_cp
            * (t.melting_temp - ambient_temp)
            * (kappa * velocity * beam_radius.powi(3)).sqrt())
}

pub fn defect_rule(depth: f64, width: f64, length: f64, layer_thickness: f64, balling_ratio: f64) -> DefectClass {
    if depth > width / 2.0 {
        DefectClass::Keyhole
    } else if depth < layer_thickness {
        DefectClass::LackOfFusion
    } else if length / width > balling_ratio {
        DefectClass::Balling
    } else {
        DefectClass::Desirable
    }
}

/// Noiseless `(depth, width, length)` in meters.
pub fn geometry(
    material: &str,
    thermal: &ThermalProps,
    absorbed_power: f64,
    velocity: f64,
    beam_radius: f64,
    cfg: &SyntheticConfig,
) -> Result<(f64, f64, f64)> {
    let d = rosenthal_depth(absorbed_power, velocity, thermal, cfg.ambient_temp, geometry_constant(material))?;
    let l = rosenthal_length(absorbed_power, thermal, cfg.ambient_temp)?;
    let depth = match cfg.keyhole_threshold {
        Some(h) => {
            let e = normalized_enthalpy(absorbed_power, velocity, beam_radius, thermal, cfg.ambient_temp);
            d * (e / h).max(1.0).sqrt()
        }
        None => d,
    };
    Ok((depth, 2.0 * d, l))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn generate(cfg: &SyntheticConfig, registry: &Registry) -> Result<Dataset> {
    if cfg.materials.is_empty() || cfg.windows.is_empty() {
        return Err(Error::Argument("need at least one material and one process window".into()));
    }
    let specs = cfg
        .materials
        .iter()
        .map(|m| registry.lookup_material(m))
        .collect::<Result<Vec<_>>>()?;
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Argument(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let spec = specs[rng.random_range(0..specs.len())];
        let w = &cfg.windows[rng.random_range(0..cfg.windows.len())];
        let power = uniform(&mut rng, w.power);
        let velocity = uniform(&mut rng, w.velocity);
        let beam_diameter = uniform(&mut rng, w.beam_diameter);
        let layer_thickness = uniform(&mut rng, w.layer_thickness);
        let hatch_spacing = uniform(&mut rng, w.hatch_spacing);
        let mut factors = [0.0; 3];
        for f in factors.iter_mut() {
            *f = noise.sample(&mut rng).exp();
        }
        let mut blank = [false; 5];
        for b in blank.iter_mut() {
            *b = rng.random_bool(cfg.missing_rate.clamp(0.0, 1.0));
        }

        let mut record = MeltpoolRecord {
            source_id: format!("synthetic-{i:05}"),
            process: w.process,
            material: spec.name.clone(),
            power,
            velocity,
            beam_diameter: Some(beam_diameter),
            layer_thickness: Some(layer_thickness),
            hatch_spacing: Some(hatch_spacing),
            depth: None,
            width: None,
            length: None,
            defect_class: None,
        };
        // Materials without thermal data still yield records, just
        // unlabeled ones.
        if let Some(t) = &spec.thermal {
            let (d, wd, l) = geometry(&spec.name, t, w.absorptivity * power, velocity, beam_diameter / 2.0, cfg)?;
            record.depth = Some(d * factors[0]);
            record.width = Some(wd * factors[1]);
            record.length = Some(l * factors[2]);
            record.defect_class = Some(defect_rule(d, wd, l, layer_thickness, cfg.balling_ratio));
        }
        if blank[0] {
            record.width = None;
        }
        if blank[1] {
            record.length = None;
        }
        if blank[2] {
            record.hatch_spacing = None;
        }
        if blank[3] {
            record.defect_class = None;
        }
        if blank[4] {
            record.layer_thickness = None;
        }
        records.push(record);
    }
    Ok(Dataset::new(records, format!("synthetic:seed={}", cfg.seed)))
}

/// The dataset shipped as `data/sample.csv`: three processes, eight
/// alloys (one without thermal data) and some blank fields.
pub fn sample_config() -> SyntheticConfig {
    let mut materials: Vec<String> = DEFAULT_MATERIALS.iter().map(|s| s.to_string()).collect();
    materials.push("AlSi10Mg".into());
    materials.push("Ti-45Al".into());
    SyntheticConfig {
        n: 320,
        seed: 2022,
        materials,
        windows: vec![
            ProcessWindow::lpbf(),
            ProcessWindow::lpbf(),
            ProcessWindow::epbf(),
            ProcessWindow::lens(),
        ],
        noise: 0.05,
        missing_rate: 0.08,
        ..SyntheticConfig::default()
    }
}

/// Pure Rosenthal depth samples with `η = 1` for identification:
/// covariates `P, V, ρ, C_p, k, T_m − T0` and depth in meters.
pub fn rosenthal_depth_samples(
    n: usize,
    seed: u64,
    noise: f64,
    materials: &[&str],
    registry: &Registry,
) -> Result<(Vec<[f64; 6]>, Vec<f64>)> {
    let cfg = SyntheticConfig {
        n,
        seed,
        materials: materials.iter().map(|s| s.to_string()).collect(),
        windows: vec![ProcessWindow {
            absorptivity: 1.0,
            ..ProcessWindow::lpbf()
        }],
        noise,
        keyhole_threshold: None,
        ..SyntheticConfig::default()
    };
    let ds = generate(&cfg, registry)?;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for r in &ds.records {
        let t = registry.lookup_material(&r.material)?.thermal()?;
        x.push([
            r.power,
            r.velocity,
            t.density,
            t.specific_heat,
            t.conductivity,
            t.melting_temp - cfg.ambient_temp,
        ]);
        y.push(r.depth.expect("thermal data present"));
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_order() {
        assert_eq!(defect_rule(60e-6, 100e-6, 100e-6, 30e-6, 6.0), DefectClass::Keyhole);
        assert_eq!(defect_rule(20e-6, 100e-6, 100e-6, 30e-6, 6.0), DefectClass::LackOfFusion);
        assert_eq!(defect_rule(40e-6, 100e-6, 700e-6, 30e-6, 6.0), DefectClass::Balling);
        assert_eq!(defect_rule(40e-6, 100e-6, 300e-6, 30e-6, 6.0), DefectClass::Desirable);
    }

    #[test]
    fn noiseless_conduction_geometry_is_rosenthal() {
        let reg = Registry::bundled();
        let cfg = SyntheticConfig {
            n: 20,
            keyhole_threshold: None,
            ..SyntheticConfig::default()
        };
        let ds = generate(&cfg, &reg).unwrap();
        for r in &ds.records {
            let t = reg.lookup_material(&r.material).unwrap().thermal.unwrap();
            let d = rosenthal_depth(0.4 * r.power, r.velocity, &t, cfg.ambient_temp, 2.0).unwrap();
            assert!((r.depth.unwrap() - d).abs() < 1e-18);
            assert_eq!(r.width.unwrap(), 2.0 * r.depth.unwrap());
            assert_ne!(r.defect_class, Some(DefectClass::Keyhole));
        }
    }

    #[test]
    fn default_labels_cover_all_classes() {
        let reg = Registry::bundled();
        let ds = generate(&SyntheticConfig::default(), &reg).unwrap();
        let mut counts = [0; 4];
        for r in &ds.records {
            counts[r.defect_class.unwrap().id()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 50), "{counts:?}");
    }

    #[test]
    fn same_seed_same_data() {
        let reg = Registry::bundled();
        let cfg = sample_config();
        assert_eq!(generate(&cfg, &reg).unwrap().records, generate(&cfg, &reg).unwrap().records);
    }

    #[test]
    fn identification_samples_have_known_multiplier() {
        let reg = Registry::bundled();
        let (x, y) = rosenthal_depth_samples(30, 1, 0.0, &["SS316L", "IN718"], &reg).unwrap();
        let w0 = (2.0 / (std::f64::consts::E * std::f64::consts::PI)).sqrt();
        for (row, d) in x.iter().zip(&y) {
            let expect = w0 * (row[0] / (row[1] * row[2] * row[3] * row[5])).sqrt();
            assert!(((expect - d) / d).abs() < 1e-12);
        }
    }
}
