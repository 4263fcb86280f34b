use serde::{Deserialize, Serialize};

use crate::geometry::Segment;
use crate::sensors::lidar::{lidar_scan, LidarCadence, LidarScan, LidarSpec};
use crate::sensors::noise::NoiseSources;
use crate::sensors::proprio::{encoder_read, imu_read, ips_read, ImuReading};
use crate::vehicle::state::{REAR_LEFT, REAR_RIGHT};
use crate::vehicle::{Pose, VehicleState};

/// Everything the vehicle's onboard computer sees at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub throttle_fb: f64,
    pub steering_fb: f64,
    /// Rear (left, right) encoder ticks.
    pub encoders: [i64; 2],
    pub ips: Pose<f64>,
    pub imu: ImuReading,
    pub lidar: Option<LidarScan>,
    pub t: f64,
}

/// Sensor configuration plus the LIDAR schedule.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    pub lidar: LidarSpec,
    pub cadence: LidarCadence,
    pub encoder_cpr: u32,
    pub dt: f64,
}

impl SensorSuite {
    pub fn new(lidar: LidarSpec, encoder_cpr: u32, dt: f64) -> Self {
        Self {
            cadence: LidarCadence::new(dt, lidar.rate),
            lidar,
            encoder_cpr,
            dt,
        }
    }

    /// Reads every sensor after the step `prev -> curr`, which ended at tick `tick`.
    pub fn read(
        &self,
        prev: &VehicleState<f64>,
        curr: &VehicleState<f64>,
        segments: &[Segment<f64>],
        tick: u64,
        noise: &mut NoiseSources,
    ) -> SensorFrame {
        let lidar = self.cadence.fires(tick).then(|| {
            let spec = LidarSpec {
                noise_sigma: noise.config.lidar_sigma,
                ..self.lidar
            };
            let stream = (spec.noise_sigma > 0.0).then_some(&mut noise.lidar);
            lidar_scan(segments, &curr.pose, &spec, stream, curr.sim_time)
        });
        let ips_sigma = noise.config.ips_sigma;
        SensorFrame {
            throttle_fb: curr.commanded.throttle,
            steering_fb: curr.commanded.steering,
            encoders: [
                encoder_read(curr.wheels[REAR_LEFT].cumulative_angle, self.encoder_cpr),
                encoder_read(curr.wheels[REAR_RIGHT].cumulative_angle, self.encoder_cpr),
            ],
            ips: ips_read(&curr.pose, ips_sigma, Some(&mut noise.ips)),
            imu: imu_read(prev, curr, self.dt),
            lidar,
            t: curr.sim_time,
        }
    }
}
