use serde::{Deserialize, Serialize};

use crate::rng::{Channel, NoiseStream};
use crate::vehicle::{ActuatorInput, Command};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// m
    pub lidar_sigma: f64,
    /// m/s, added to the drive velocity target
    pub drive_sigma: f64,
    /// rad/s, added to the steering slew rate
    pub steer_sigma: f64,
    /// m, overhead positioning
    #[serde(default)]
    pub ips_sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn off(seed: u64) -> Self {
        Self {
            lidar_sigma: 0.0,
            drive_sigma: 0.0,
            steer_sigma: 0.0,
            ips_sigma: 0.0,
            seed,
        }
    }

    /// LIDAR 0.025 m, drive 0.013 m/s, steering 0.018 rad/s.
    pub fn paper(seed: u64) -> Self {
        Self {
            lidar_sigma: 0.025,
            drive_sigma: 0.013,
            steer_sigma: 0.018,
            ips_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (k, v) in [
            ("lidar_sigma", self.lidar_sigma),
            ("drive_sigma", self.drive_sigma),
            ("steer_sigma", self.steer_sigma),
            ("ips_sigma", self.ips_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("noise.{k} must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

/// One independent stream per noisy channel.
#[derive(Debug, Clone)]
pub struct NoiseSources {
    pub config: NoiseConfig,
    pub lidar: NoiseStream,
    pub drive: NoiseStream,
    pub steer: NoiseStream,
    pub ips: NoiseStream,
}

impl NoiseSources {
    pub fn new(config: NoiseConfig) -> Self {
        let s = config.seed;
        Self {
            config,
            lidar: NoiseStream::new(s, Channel::Lidar),
            drive: NoiseStream::new(s, Channel::Drive),
            steer: NoiseStream::new(s, Channel::Steer),
            ips: NoiseStream::new(s, Channel::Ips),
        }
    }
}

/// Clamps the command and attaches one drive-velocity and one steering-rate perturbation.
///
/// The actuator models saturate the perturbed targets again when they apply them.
pub fn actuate_noisy(cmd: Command<f64>, noise: &mut NoiseSources) -> ActuatorInput<f64> {
    ActuatorInput {
        command: cmd.clamped(),
        drive_velocity_offset: noise.drive.gaussian(noise.config.drive_sigma),
        steer_rate_offset: noise.steer.gaussian(noise.config.steer_sigma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let mut n = NoiseSources::new(NoiseConfig::off(1));
        let a = actuate_noisy(Command::new(0.3, -0.2), &mut n);
        assert_eq!(a, ActuatorInput::from(Command::new(0.3, -0.2)));
    }

    #[test]
    fn reproducible() {
        let draw = || {
            let mut n = NoiseSources::new(NoiseConfig::paper(11));
            (0..100)
                .map(|_| actuate_noisy(Command::zero(), &mut n))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn half_normal_mean() {
        let mut n = NoiseSources::new(NoiseConfig::paper(5));
        let k = 10_000;
        let (mut d, mut s) = (0.0, 0.0);
        for _ in 0..k {
            let a = actuate_noisy(Command::zero(), &mut n);
            d += a.drive_velocity_offset.abs();
            s += a.steer_rate_offset.abs();
        }
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        let (d, s) = (d / k as f64 / 0.013, s / k as f64 / 0.018);
        assert!((d / expect - 1.0).abs() < 0.05, "{d}");
        assert!((s / expect - 1.0).abs() < 0.05, "{s}");
    }
}
