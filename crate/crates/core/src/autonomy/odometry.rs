use serde::{Deserialize, Serialize};

use crate::num::wrap_angle;
use crate::sensors::SensorFrame;

/// Rigid motion expressed in the frame of the earlier pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomDelta {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl OdomDelta {
    /// `self` followed by `next`.
    pub fn then(self, next: OdomDelta) -> OdomDelta {
        let (s, c) = self.dyaw.sin_cos();
        OdomDelta {
            dx: self.dx + c * next.dx - s * next.dy,
            dy: self.dy + s * next.dx + c * next.dy,
            dyaw: wrap_angle(self.dyaw + next.dyaw),
        }
    }

    pub fn distance(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Wheel/IMU dead reckoning between two frames.
///
/// Travel is the mean rear encoder delta times `2 pi r / cpr`, heading change
/// comes from the IMU yaw, and the two are composed as a unicycle arc
/// (travel along the mid-step heading).
pub fn odometry_update(
    prev: &SensorFrame,
    curr: &SensorFrame,
    wheel_radius: f64,
    cpr: u32,
) -> OdomDelta {
    let ticks = 0.5
        * ((curr.encoders[0] - prev.encoders[0]) + (curr.encoders[1] - prev.encoders[1])) as f64;
    let d = ticks * std::f64::consts::TAU * wheel_radius / cpr as f64;
    let dyaw = wrap_angle(curr.imu.yaw - prev.imu.yaw);
    let (s, c) = (0.5 * dyaw).sin_cos();
    OdomDelta {
        dx: d * c,
        dy: d * s,
        dyaw,
    }
}
