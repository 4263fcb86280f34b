use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::vehicle::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorConfig<T> {
    /// Wheel surface speed at full throttle, m/s.
    pub max_drive_speed: T,
    /// N*m per driven wheel.
    pub max_drive_torque: T,
    /// Speed-tracking gain, N*m per rad/s of wheel speed error.
    pub speed_gain: T,
    /// Holding torque limit at zero throttle, N*m. Equal to the brake torque.
    pub brake_torque: T,
    /// Holding torque slope near standstill, N*m per rad/s.
    pub hold_gain: T,
    /// kg*m^2
    pub steer_inertia: T,
    /// rad/s
    pub max_steer_rate: T,
}

impl<T: Real> ActuatorConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("actuators.max_drive_speed", self.max_drive_speed),
            ("actuators.max_drive_torque", self.max_drive_torque),
            ("actuators.speed_gain", self.speed_gain),
            ("actuators.brake_torque", self.brake_torque),
            ("actuators.hold_gain", self.hold_gain),
            ("actuators.steer_inertia", self.steer_inertia),
            ("actuators.max_steer_rate", self.max_steer_rate),
        ];
        for (key, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ConfigError::invalid(key, "must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// `1/2 m r^2`
pub fn drive_wheel_inertia<T: Real>(mass: T, radius: T) -> T {
    T::lit(0.5) * mass * radius * radius
}

/// Torque on a driven wheel and its derivative with respect to wheel speed.
///
/// Nonzero throttle tracks the wheel speed `(cmd * v_max + velocity_offset) / r`
/// (target re-clamped to `+-v_max / r`) with a proportional torque clamped to
/// `+-max_drive_torque`. Zero throttle applies the holding torque, which opposes
/// rotation and saturates at the brake torque.
pub fn drive_torque_with_slope<T: Real>(
    cmd: T,
    omega: T,
    radius: T,
    cfg: &ActuatorConfig<T>,
    velocity_offset: T,
) -> (T, T) {
    if cmd == T::zero() {
        let raw = -cfg.hold_gain * omega;
        if raw.abs() <= cfg.brake_torque {
            (raw, -cfg.hold_gain)
        } else {
            (cfg.brake_torque.copysign(raw), T::zero())
        }
    } else {
        let v_target = (cmd * cfg.max_drive_speed + velocity_offset)
            .clamp_to(-cfg.max_drive_speed, cfg.max_drive_speed);
        let raw = cfg.speed_gain * (v_target / radius - omega);
        if raw.abs() <= cfg.max_drive_torque {
            (raw, -cfg.speed_gain)
        } else {
            (cfg.max_drive_torque.copysign(raw), T::zero())
        }
    }
}

pub fn drive_torque<T: Real>(cmd: T, omega: T, radius: T, cfg: &ActuatorConfig<T>) -> T {
    drive_torque_with_slope(cmd, omega, radius, cfg, T::zero()).0
}

/// Steering response over one step: `(new_angle, rate, actuator_torque)`.
///
/// The angle slews toward `cmd * max_steer` no faster than the rate limit;
/// `rate_offset` perturbs the slew rate before the limit is re-applied.
pub fn steer_dynamics_full<T: Real>(
    cmd: T,
    delta: T,
    prev_rate: T,
    max_steer: T,
    cfg: &ActuatorConfig<T>,
    dt: T,
    rate_offset: T,
) -> (T, T, T) {
    let target = cmd.clamp_to(-T::one(), T::one()) * max_steer;
    let rate =
        ((target - delta) / dt + rate_offset).clamp_to(-cfg.max_steer_rate, cfg.max_steer_rate);
    let new_delta = (delta + rate * dt).clamp_to(-max_steer, max_steer);
    let rate = (new_delta - delta) / dt;
    let torque = cfg.steer_inertia * (rate - prev_rate) / dt;
    (new_delta, rate, torque)
}

pub fn steer_dynamics<T: Real>(
    cmd: T,
    delta: T,
    max_steer: T,
    cfg: &ActuatorConfig<T>,
    dt: T,
) -> T {
    steer_dynamics_full(cmd, delta, T::zero(), max_steer, cfg, dt, T::zero()).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_6;

    fn cfg() -> ActuatorConfig<f64> {
        ActuatorConfig {
            max_drive_speed: 0.26,
            max_drive_torque: 0.03,
            speed_gain: 0.02,
            brake_torque: 0.05,
            hold_gain: 0.05,
            steer_inertia: 1e-4,
            max_steer_rate: 0.42,
        }
    }

    #[test]
    fn idle_at_rest_is_zero() {
        assert_eq!(drive_torque(0.0, 0.0, 0.0325, &cfg()), 0.0);
    }

    #[test]
    fn holding_torque_opposes_rolling() {
        for &w in &[-30.0, -1.0, -0.01, 0.01, 2.0, 50.0] {
            let t = drive_torque(0.0, w, 0.0325, &cfg());
            assert!(t * w < 0.0);
            assert!(t.abs() <= cfg().brake_torque);
        }
    }

    #[test]
    fn drive_is_clamped() {
        let t = drive_torque(1.0, 0.0, 0.0325, &cfg());
        assert_eq!(t, cfg().max_drive_torque);
        let t = drive_torque(-1.0, 0.0, 0.0325, &cfg());
        assert_eq!(t, -cfg().max_drive_torque);
    }

    #[test]
    fn velocity_offset_is_reclamped() {
        let c = cfg();
        let w = 0.26 / 0.0325;
        // already at top speed, a positive offset cannot push the target higher
        let (t, _) = drive_torque_with_slope(1.0, w, 0.0325, &c, 0.5);
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn setpoint_reached_holds() {
        let c = cfg();
        let d = steer_dynamics(0.5, 0.5 * FRAC_PI_6, FRAC_PI_6, &c, 0.002);
        assert!((d - 0.5 * FRAC_PI_6).abs() < 1e-15);
    }

    #[test]
    fn full_slew_time_matches_rate_limit() {
        let c = cfg();
        let dt = 0.002;
        let mut d = 0.0;
        let mut t = 0.0;
        while d < FRAC_PI_6 {
            d = steer_dynamics(1.0, d, FRAC_PI_6, &c, dt);
            t += dt;
            assert!(d <= FRAC_PI_6);
        }
        let expected = FRAC_PI_6 / 0.42;
        assert!((t - expected).abs() < dt + 1e-9, "{t} vs {expected}");
    }

    #[test]
    fn rate_noise_cannot_exceed_limits() {
        let c = cfg();
        let (d, r, _) = steer_dynamics_full(1.0, FRAC_PI_6, 0.0, FRAC_PI_6, &c, 0.002, 5.0);
        assert_eq!(d, FRAC_PI_6);
        assert_eq!(r, 0.0);
    }
}
