use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::vehicle::ackermann::AckermannGeometry;
use crate::vehicle::actuators::ActuatorConfig;
use crate::vehicle::friction::FrictionSpec;
use crate::vehicle::mass::{MassLayout, SprungMass};
use crate::vehicle::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelConfig<T> {
    /// m
    pub radius: T,
    /// kg
    pub mass: T,
    /// Rotational loss, N*m per rad/s.
    pub rolling_damping: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspensionConfig<T> {
    /// N/m
    pub spring_k: T,
    /// N*s/m
    pub damping_b: T,
    /// Unloaded gap between sprung corner and wheel center, m.
    pub natural_gap: T,
    /// Deflection stop about equilibrium, m.
    pub travel_limit: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyConfig<T> {
    /// Footprint length, m.
    pub length: T,
    /// Footprint width, m.
    pub width: T,
    /// Center of gravity height used for static load transfer, m.
    pub cg_height: T,
}

/// Complete vehicle parameter set. Keys mirror the JSON document, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig<T> {
    /// Sprung masses in corner order: front-left, front-right, rear-left, rear-right.
    pub mass_layout: MassLayout<T>,
    pub geometry: AckermannGeometry<T>,
    pub wheel: WheelConfig<T>,
    pub suspension: SuspensionConfig<T>,
    pub friction_longitudinal: FrictionSpec<T>,
    pub friction_lateral: FrictionSpec<T>,
    pub actuators: ActuatorConfig<T>,
    pub body: BodyConfig<T>,
    pub encoder_cpr: u32,
    pub gravity: T,
    /// Slip denominator floor, m/s.
    pub slip_epsilon: T,
}

impl<T: Real> Default for VehicleConfig<T> {
    fn default() -> Self {
        let l = T::lit(0.1725);
        let w = T::lit(0.135);
        let h = T::lit(0.05);
        let half = T::lit(0.5);
        let corner = |sx: f64, sy: f64| SprungMass {
            mass: T::lit(0.55),
            position: [T::lit(sx) * l * half, T::lit(sy) * w * half, h],
        };
        let friction = FrictionSpec {
            anchors: [
                [T::zero(), T::zero()],
                [T::lit(0.2), T::one()],
                [T::lit(0.8), T::lit(0.75)],
            ],
            initial_slope: T::lit(10.0),
        };
        Self {
            mass_layout: MassLayout {
                sprung_masses: vec![
                    corner(1.0, 1.0),
                    corner(1.0, -1.0),
                    corner(-1.0, 1.0),
                    corner(-1.0, -1.0),
                ],
            },
            geometry: AckermannGeometry {
                wheelbase: l,
                track: w,
                max_steer: T::FRAC_PI_6(),
            },
            wheel: WheelConfig {
                radius: T::lit(0.0325),
                mass: T::lit(0.05),
                rolling_damping: T::lit(2e-5),
            },
            suspension: SuspensionConfig {
                spring_k: T::lit(500.0),
                damping_b: T::lit(8.0),
                natural_gap: T::lit(0.03),
                travel_limit: T::lit(0.01),
            },
            friction_longitudinal: friction,
            friction_lateral: friction,
            actuators: ActuatorConfig {
                max_drive_speed: T::lit(0.26),
                max_drive_torque: T::lit(0.03),
                speed_gain: T::lit(0.02),
                brake_torque: T::lit(0.05),
                hold_gain: T::lit(0.05),
                steer_inertia: T::lit(1e-4),
                max_steer_rate: T::lit(0.42),
            },
            body: BodyConfig {
                length: T::lit(0.22),
                width: T::lit(0.16),
                cg_height: h,
            },
            encoder_cpr: 1920,
            gravity: T::lit(9.81),
            slip_epsilon: T::lit(1e-3),
        }
    }
}

fn positive<T: Real>(key: &str, v: T) -> Result<(), ConfigError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, "must be positive and finite"))
    }
}

impl<T: Real> VehicleConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mass_layout.validate()?;
        if self.mass_layout.sprung_masses.len() != 4 {
            return Err(ConfigError::invalid(
                "mass_layout.sprung_masses",
                "expected four corner masses (FL, FR, RL, RR)",
            ));
        }
        self.geometry.validate()?;
        positive("wheel.radius", self.wheel.radius)?;
        positive("wheel.mass", self.wheel.mass)?;
        if !(self.wheel.rolling_damping >= T::zero()) {
            return Err(ConfigError::invalid(
                "wheel.rolling_damping",
                "must be non-negative",
            ));
        }
        positive("suspension.spring_k", self.suspension.spring_k)?;
        if !(self.suspension.damping_b >= T::zero()) {
            return Err(ConfigError::invalid(
                "suspension.damping_b",
                "must be non-negative",
            ));
        }
        positive("suspension.natural_gap", self.suspension.natural_gap)?;
        positive("suspension.travel_limit", self.suspension.travel_limit)?;
        self.actuators.validate()?;
        positive("body.length", self.body.length)?;
        positive("body.width", self.body.width)?;
        if !(self.body.cg_height >= T::zero()) {
            return Err(ConfigError::invalid(
                "body.cg_height",
                "must be non-negative",
            ));
        }
        if self.encoder_cpr == 0 {
            return Err(ConfigError::invalid("encoder_cpr", "must be positive"));
        }
        positive("gravity", self.gravity)?;
        positive("slip_epsilon", self.slip_epsilon)?;
        crate::vehicle::friction::FrictionCurve::fit(&self.friction_longitudinal)
            .map_err(|e| e.prefixed("friction_longitudinal"))?;
        crate::vehicle::friction::FrictionCurve::fit(&self.friction_lateral)
            .map_err(|e| e.prefixed("friction_lateral"))?;
        Ok(())
    }
}

impl<T: Real + serde::de::DeserializeOwned> VehicleConfig<T> {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = VehicleConfig::<f64>::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = VehicleConfig::<f64>::from_json(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_default_file_matches() {
        let text = include_str!("../../presets/vehicle_default.json");
        assert_eq!(
            VehicleConfig::<f64>::from_json(text).unwrap(),
            VehicleConfig::default()
        );
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = VehicleConfig::<f64>::default();
        cfg.suspension.spring_k = -1.0;
        let text = serde_json::to_string(&cfg).unwrap();
        let err = VehicleConfig::<f64>::from_json(&text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("suspension.spring_k"), "{err}");

        let mut v: serde_json::Value =
            serde_json::to_value(VehicleConfig::<f64>::default()).unwrap();
        v["wheel"].as_object_mut().unwrap().remove("radius");
        let err = VehicleConfig::<f64>::from_json(&v.to_string())
            .unwrap_err()
            .to_string();
        assert!(err.contains("radius"), "{err}");

        let mut cfg = VehicleConfig::<f64>::default();
        cfg.friction_lateral.anchors[1][0] = 0.9;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("friction_lateral"), "{err}");
    }
}
