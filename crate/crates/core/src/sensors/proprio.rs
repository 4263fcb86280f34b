use serde::{Deserialize, Serialize};

use crate::num::wrap_angle;
use crate::rng::NoiseStream;
use crate::vehicle::{Pose, VehicleState};

/// Signed tick count `floor(angle / 2pi * cpr)`.
///
/// Angles within 1e-9 counts of an integer snap to it first, so whole and half
/// revolutions that are exact in decimal are not lost to binary rounding.
pub fn encoder_read(cumulative_angle: f64, cpr: u32) -> i64 {
    let c = cumulative_angle / std::f64::consts::TAU * cpr as f64;
    let r = c.round();
    if (c - r).abs() <= 1e-9 * c.abs().max(1.0) {
        r as i64
    } else {
        c.floor() as i64
    }
}

/// Ground-truth planar pose with optional Gaussian position noise.
///
/// The simulator is right-handed throughout, so no handedness conversion is applied.
pub fn ips_read(pose: &Pose<f64>, sigma: f64, noise: Option<&mut NoiseStream>) -> Pose<f64> {
    match noise {
        Some(n) if sigma > 0.0 => {
            let dx = n.gaussian(sigma);
            let dy = n.gaussian(sigma);
            Pose::new(pose.x + dx, pose.y + dy, pose.yaw)
        }
        _ => *pose,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuReading {
    pub yaw: f64,
    pub yaw_rate: f64,
    /// Body-frame acceleration `(a_x, a_y)`, m/s^2.
    pub accel: [f64; 2],
}

/// Finite-difference IMU between two consecutive states.
///
/// `a = dv/dt + omega x v` in the body frame, using the current yaw rate.
pub fn imu_read(prev: &VehicleState<f64>, curr: &VehicleState<f64>, dt: f64) -> ImuReading {
    let (v0, v1) = (&prev.velocity, &curr.velocity);
    let r = v1.yaw_rate;
    ImuReading {
        yaw: curr.pose.yaw,
        yaw_rate: wrap_angle(curr.pose.yaw - prev.pose.yaw) / dt,
        accel: [
            (v1.vx - v0.vx) / dt - r * v1.vy,
            (v1.vy - v0.vy) / dt + r * v1.vx,
        ],
    }
}
