use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::vehicle::suspension::SuspensionCorner;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub yaw: T,
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, yaw: T) -> Self {
        Self { x, y, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }
}

/// Chassis velocity in the body frame (x forward, y left).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity<T> {
    pub vx: T,
    pub vy: T,
    pub yaw_rate: T,
}

/// Normalized driver command. Positive throttle drives forward, positive steering turns left.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command<T> {
    pub throttle: T,
    pub steering: T,
}

impl<T: Real> Command<T> {
    pub fn new(throttle: T, steering: T) -> Self {
        Self { throttle, steering }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Both channels clamped to `[-1, 1]`; NaN maps to zero.
    pub fn clamped(self) -> Self {
        let c = |v: T| {
            if v.is_nan() {
                T::zero()
            } else {
                v.clamp_to(-T::one(), T::one())
            }
        };
        Self::new(c(self.throttle), c(self.steering))
    }
}

/// A command plus actuator-level perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorInput<T> {
    pub command: Command<T>,
    /// Added to the drive velocity target, m/s.
    pub drive_velocity_offset: T,
    /// Added to the steering slew rate, rad/s.
    pub steer_rate_offset: T,
}

impl<T: Real> From<Command<T>> for ActuatorInput<T> {
    fn from(command: Command<T>) -> Self {
        Self {
            command,
            drive_velocity_offset: T::zero(),
            steer_rate_offset: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelState<T> {
    pub radius: T,
    pub angular_velocity: T,
    pub angular_acceleration: T,
    pub cumulative_angle: T,
    /// Zero for the rear wheels.
    pub steer_angle: T,
    pub slip_long: T,
    pub slip_lat: T,
    pub normal_load: T,
    /// Actuator torque applied during the last step, N*m.
    pub torque: T,
    /// Tire-frame forces from the last step, N.
    pub force_long: T,
    pub force_lat: T,
}

/// Wheel / corner order.
pub const FRONT_LEFT: usize = 0;
pub const FRONT_RIGHT: usize = 1;
pub const REAR_LEFT: usize = 2;
pub const REAR_RIGHT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState<T> {
    /// Center-of-mass pose in the world frame.
    pub pose: Pose<T>,
    pub velocity: BodyVelocity<T>,
    pub corners: [SuspensionCorner<T>; 4],
    pub wheels: [WheelState<T>; 4],
    /// Last applied command, echoed by the feedback channels.
    pub commanded: Command<T>,
    /// Center steering angle, rad.
    pub steer_angle: T,
    pub steer_rate: T,
    pub steer_torque: T,
    /// Body-frame acceleration including the centripetal term, m/s^2.
    pub body_accel: [T; 2],
    pub sim_time: T,
}

impl<T: Real> VehicleState<T> {
    pub fn is_finite(&self) -> bool {
        let v = &self.velocity;
        self.pose.is_finite()
            && v.vx.is_finite()
            && v.vy.is_finite()
            && v.yaw_rate.is_finite()
            && self.corners.iter().all(|c| {
                c.sprung_height.is_finite()
                    && c.sprung_rate.is_finite()
                    && c.wheel_height.is_finite()
                    && c.wheel_rate.is_finite()
            })
            && self.wheels.iter().all(|w| {
                w.angular_velocity.is_finite()
                    && w.cumulative_angle.is_finite()
                    && w.normal_load.is_finite()
            })
            && self.steer_angle.is_finite()
            && self.body_accel.iter().all(|a| a.is_finite())
            && self.sim_time.is_finite()
    }

    /// Planar speed of the center of mass.
    pub fn speed(&self) -> T {
        self.velocity.vx.hypot(self.velocity.vy)
    }
}
