//! Quasi-3D Ackermann vehicle: planar chassis, four suspension corners, slip-based tires.

pub mod ackermann;
pub mod actuators;
pub mod config;
pub mod dynamics;
pub mod friction;
pub mod mass;
pub mod state;
pub mod suspension;
pub mod tire;

pub use ackermann::{ackermann_angles, wheel_steer_angles, AckermannGeometry};
pub use actuators::{drive_torque, steer_dynamics, ActuatorConfig};
pub use config::{BodyConfig, SuspensionConfig, VehicleConfig, WheelConfig};
pub use dynamics::{step, Vehicle};
pub use friction::{FrictionCurve, FrictionSpec};
pub use mass::{center_of_mass, MassLayout, SprungMass};
pub use state::{ActuatorInput, BodyVelocity, Command, Pose, VehicleState, WheelState};
pub use suspension::{suspension_force, wheel_vertical_accel, SuspensionCorner};
pub use tire::{slip, tire_force};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("malformed vehicle config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn prefixed(self, prefix: &str) -> Self {
        match self {
            Self::Invalid { key, reason } => Self::Invalid {
                key: format!("{prefix}.{}", key.trim_start_matches("friction.")),
                reason,
            },
            other => other,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("time step {0} outside (0, 0.01] s")]
    InvalidTimeStep(f64),
    #[error("vehicle state contains non-finite values")]
    NonFiniteInput,
    #[error("integration produced non-finite state at t = {time} s")]
    IntegrationFault { time: f64 },
}
