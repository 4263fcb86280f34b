use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::vehicle::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AckermannGeometry<T> {
    /// Wheelbase, m.
    pub wheelbase: T,
    /// Track width, m.
    pub track: T,
    /// Steering saturation, rad. Positive steering turns left.
    pub max_steer: T,
}

impl<T: Real> AckermannGeometry<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.wheelbase > T::zero()) {
            return Err(ConfigError::invalid(
                "geometry.wheelbase",
                "must be positive",
            ));
        }
        if !(self.track > T::zero()) {
            return Err(ConfigError::invalid("geometry.track", "must be positive"));
        }
        if !(self.max_steer > T::zero() && self.max_steer < T::FRAC_PI_2()) {
            return Err(ConfigError::invalid(
                "geometry.max_steer",
                "must lie in (0, pi/2)",
            ));
        }
        Ok(())
    }
}

/// Left and right wheel angles `(delta_l, delta_r)` for a steering angle `delta`.
///
/// `delta_l = atan(2 l tan d / (2 l + w tan d))`,
/// `delta_r = atan(2 l tan d / (2 l - w tan d))`, with `d` clamped to the
/// saturation. These are stated for a right-positive steering sign, so for
/// `delta > 0` the right wheel is the inner one. See [`wheel_steer_angles`]
/// for the left-positive chassis convention.
pub fn ackermann_angles<T: Real>(geom: &AckermannGeometry<T>, delta: T) -> (T, T) {
    let d = delta.clamp_to(-geom.max_steer, geom.max_steer);
    if d == T::zero() {
        return (T::zero(), T::zero());
    }
    let t = d.tan();
    let two_l = T::lit(2.0) * geom.wheelbase;
    let num = two_l * t;
    (
        (num / (two_l + geom.track * t)).atan(),
        (num / (two_l - geom.track * t)).atan(),
    )
}

/// Front wheel angles `[left, right]` for a left-positive steering angle.
///
/// A left turn puts the left wheel on the inside, so it receives the larger angle.
pub fn wheel_steer_angles<T: Real>(geom: &AckermannGeometry<T>, delta: T) -> [T; 2] {
    let (l, r) = ackermann_angles(geom, -delta);
    [-l, -r]
}
