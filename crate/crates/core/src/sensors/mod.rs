//! Sensor suite: 2D LIDAR, wheel encoders, IMU, overhead positioning, actuator noise.

pub mod frame;
pub mod lidar;
pub mod noise;
pub mod proprio;

pub use frame::{SensorFrame, SensorSuite};
pub use lidar::{lidar_scan, LidarCadence, LidarScan, LidarSpec};
pub use noise::{actuate_noisy, NoiseConfig, NoiseSources};
pub use proprio::{encoder_read, imu_read, ips_read, ImuReading};
