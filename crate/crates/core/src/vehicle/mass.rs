use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::vehicle::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprungMass<T> {
    /// kg
    pub mass: T,
    /// Chassis-frame coordinates, m.
    pub position: [T; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLayout<T> {
    pub sprung_masses: Vec<SprungMass<T>>,
}

impl<T: Real> MassLayout<T> {
    pub fn total_mass(&self) -> T {
        self.sprung_masses.iter().map(|m| m.mass).sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sprung_masses.is_empty() {
            return Err(ConfigError::invalid(
                "mass_layout.sprung_masses",
                "must not be empty",
            ));
        }
        for (i, m) in self.sprung_masses.iter().enumerate() {
            if !(m.mass > T::zero()) || !m.mass.is_finite() {
                return Err(ConfigError::invalid(
                    format!("mass_layout.sprung_masses[{i}].mass"),
                    "must be a positive finite mass",
                ));
            }
            if m.position.iter().any(|p| !p.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("mass_layout.sprung_masses[{i}].position"),
                    "must be finite",
                ));
            }
        }
        Ok(())
    }
}

/// Mass-weighted mean of the sprung mass positions.
pub fn center_of_mass<T: Real>(layout: &MassLayout<T>) -> Result<[T; 3], ConfigError> {
    layout.validate()?;
    let total = layout.total_mass();
    let mut acc = [T::zero(); 3];
    for m in &layout.sprung_masses {
        for (a, p) in acc.iter_mut().zip(m.position) {
            *a += m.mass * p;
        }
    }
    Ok(acc.map(|a| a / total))
}
