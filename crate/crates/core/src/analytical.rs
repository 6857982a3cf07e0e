//! Rosenthal moving point source: temperature field and closed-form
//! meltpool depth, width and length.
//!
//! `Q` is always the *absorbed* power; callers pick the absorptivity.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::ThermalProps;

/// Geometry constant for AlSi10Mg.
pub const GEOMETRY_CONSTANT_ALSI10MG: f64 = 2.5;
/// Geometry constant for every other alloy.
pub const GEOMETRY_CONSTANT_DEFAULT: f64 = 2.0;

/// The depth constant `A` for a material name.
pub fn geometry_constant(material: &str) -> f64 {
    if material == "AlSi10Mg" {
        GEOMETRY_CONSTANT_ALSI10MG
    } else {
        GEOMETRY_CONSTANT_DEFAULT
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RosenthalQuery {
    /// Absorbed power, W.
    pub absorbed_power: f64,
    /// Scan speed, m/s.
    pub velocity: f64,
    pub thermal: ThermalProps,
    /// Far-field temperature, K.
    pub ambient_temp: f64,
    /// Distance behind the source along the scan axis, m.
    pub z: f64,
    /// Distance from the scan axis, m.
    pub r: f64,
}

impl RosenthalQuery {
    pub fn radius(&self) -> f64 {
        self.z.hypot(self.r)
    }
}

/// `T = T0 + Q / (2π k R) · exp(ρ C_p V (Z − R) / (2 k))`.
pub fn rosenthal_temperature(q: &RosenthalQuery) -> Result<f64> {
    let radius = q.radius();
    if radius == 0.0 {
        return Err(Error::Singularity);
    }
    let t = &q.thermal;
    let k = t.conductivity;
    let exponent = t.density * t.specific_heat * q.velocity * (q.z - radius) / (2.0 * k);
    Ok(q.ambient_temp + q.absorbed_power / (2.0 * PI * k * radius) * exponent.exp())
}

fn superheat(thermal: &ThermalProps, ambient_temp: f64) -> Result<f64> {
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

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {v}")))
    }
}

/// `D = sqrt(A Q / (e π ρ C_p (T_m − T0) V))`.
pub fn rosenthal_depth(
    absorbed_power: f64,
    velocity: f64,
    thermal: &ThermalProps,
    ambient_temp: f64,
    geometry_constant: f64,
) -> Result<f64> {
    positive("absorbed power", absorbed_power)?;
    positive("velocity", velocity)?;
    positive("geometry constant", geometry_constant)?;
    let dt = superheat(thermal, ambient_temp)?;
    Ok((geometry_constant * absorbed_power
        / (E * PI * thermal.density * thermal.specific_heat * dt * velocity))
        .sqrt())
}

/// Twice the Rosenthal depth.
pub fn rosenthal_width(
    absorbed_power: f64,
    velocity: f64,
    thermal: &ThermalProps,
    ambient_temp: f64,
    geometry_constant: f64,
) -> Result<f64> {
    Ok(2.0 * rosenthal_depth(absorbed_power, velocity, thermal, ambient_temp, geometry_constant)?)
}

/// `L = Q / (2 π k (T_m − T0))`, the isotherm radius on the trailing axis.
pub fn rosenthal_length(absorbed_power: f64, thermal: &ThermalProps, ambient_temp: f64) -> Result<f64> {
    positive("absorbed power", absorbed_power)?;
    let dt = superheat(thermal, ambient_temp)?;
    Ok(absorbed_power / (2.0 * PI * thermal.conductivity * dt))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosenthalGeometry {
    pub depth_um: f64,
    pub width_um: f64,
    pub length_um: f64,
}

/// All three estimates, in micrometers.
pub fn rosenthal_geometry(
    absorbed_power: f64,
    velocity: f64,
    thermal: &ThermalProps,
    ambient_temp: f64,
    geometry_constant: f64,
) -> Result<RosenthalGeometry> {
    let d = rosenthal_depth(absorbed_power, velocity, thermal, ambient_temp, geometry_constant)?;
    Ok(RosenthalGeometry {
        depth_um: d * 1e6,
        width_um: 2.0 * d * 1e6,
        length_um: rosenthal_length(absorbed_power, thermal, ambient_temp)? * 1e6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::Registry;

    fn ti64() -> ThermalProps {
        *Registry::bundled()
            .lookup_material("Ti-6Al-4V")
            .unwrap()
            .thermal()
            .unwrap()
    }

    fn query(v: f64, z: f64, r: f64) -> RosenthalQuery {
        RosenthalQuery {
            absorbed_power: 100.0,
            velocity: v,
            thermal: ti64(),
            ambient_temp: 298.0,
            z,
            r,
        }
    }

    #[test]
    fn stationary_and_on_axis_reduce_to_point_source() {
        let expected = 298.0 + 100.0 / (2.0 * PI * 7.2 * 5e-5);
        let t0 = rosenthal_temperature(&query(0.0, 0.0, 5e-5)).unwrap();
        assert!((t0 - expected).abs() < 1e-9 * expected);
        let t1 = rosenthal_temperature(&query(0.7, 5e-5, 0.0)).unwrap();
        assert!((t1 - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn temperature_by_hand() {
        // Z = 0, r = 5e-5: exponent = -rho cp V r / (2k)
        let rho_cp: f64 = 4470.5 * 561.5;
        let expected =
            298.0 + 100.0 / (2.0 * PI * 7.2 * 5e-5) * (-(rho_cp * 0.5 * 5e-5) / (2.0 * 7.2)).exp();
        let got = rosenthal_temperature(&query(0.5, 0.0, 5e-5)).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-12);
        assert!(got > 298.0);
        let far = rosenthal_temperature(&query(0.5, 0.0, 1.0)).unwrap();
        assert!(far - 298.0 < 1e-6);
        assert!(matches!(rosenthal_temperature(&query(0.5, 0.0, 0.0)), Err(Error::Singularity)));
    }

    #[test]
    fn depth_by_hand() {
        let d = rosenthal_depth(100.0, 1.0, &ti64(), 298.0, 2.0).unwrap();
        let expected = (2.0 * 100.0 / (E * PI * 4470.5 * 561.5 * 1624.0 * 1.0)).sqrt();
        assert!(((d - expected) / expected).abs() < 1e-14);
        assert!((d - 7.6e-5).abs() < 0.05e-5, "{d}");
        let w = rosenthal_width(100.0, 1.0, &ti64(), 298.0, 2.0).unwrap();
        assert_eq!(w, 2.0 * d);
        let d4 = rosenthal_depth(400.0, 1.0, &ti64(), 298.0, 2.0).unwrap();
        assert!((d4 / d - 2.0).abs() < 1e-14);
    }

    #[test]
    fn length_ignores_speed_and_domain_errors() {
        let l = rosenthal_length(100.0, &ti64(), 298.0).unwrap();
        assert!((l - 100.0 / (2.0 * PI * 7.2 * 1624.0)).abs() < 1e-18);
        assert!(rosenthal_length(100.0, &ti64(), 5000.0).is_err());
        assert!(rosenthal_depth(100.0, 1.0, &ti64(), 1922.0, 2.0).is_err());
    }

    #[test]
    fn geometry_constant_rule() {
        assert_eq!(geometry_constant("AlSi10Mg"), 2.5);
        assert_eq!(geometry_constant("SS316L"), 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn depth_monotone_and_ratio_invariant(q in 10.0f64..1000.0, v in 0.05f64..3.0, s in 0.1f64..10.0) {
                let t = ti64();
                let d = rosenthal_depth(q, v, &t, 298.0, 2.0).unwrap();
                prop_assert!(rosenthal_depth(q * 1.01, v, &t, 298.0, 2.0).unwrap() > d);
                prop_assert!(rosenthal_depth(q, v * 1.01, &t, 298.0, 2.0).unwrap() < d);
                let scaled = rosenthal_depth(q * s, v * s, &t, 298.0, 2.0).unwrap();
                prop_assert!(((scaled - d) / d).abs() < 1e-12);
            }
        }
    }
}
