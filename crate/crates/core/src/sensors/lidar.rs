use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{ray_segment, Segment, Vec2};
use crate::rng::NoiseStream;
use crate::vehicle::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub beams: usize,
    /// rad
    pub angular_resolution: f64,
    pub range_min: f64,
    pub range_max: f64,
    /// Hz
    pub rate: f64,
    /// Per-beam range noise, m.
    pub noise_sigma: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beams: 360,
            angular_resolution: 1f64.to_radians(),
            range_min: 0.15,
            range_max: 12.0,
            rate: 7.0,
            noise_sigma: 0.025,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.beams == 0 {
            return Err("lidar.beams must be positive".into());
        }
        let sweep = self.beams as f64 * self.angular_resolution;
        if (sweep - std::f64::consts::TAU).abs() > 1e-9 {
            return Err("lidar beams * angular_resolution must equal 360 deg".into());
        }
        if !(self.range_min >= 0.0 && self.range_min < self.range_max) {
            return Err("lidar range_min must be below range_max".into());
        }
        if !(self.rate > 0.0 && self.noise_sigma >= 0.0) {
            return Err("lidar rate must be positive and noise_sigma non-negative".into());
        }
        Ok(())
    }
}

/// One sweep. Beam `i` points at `angle_min + i * angle_increment` in the sensor frame
/// (counterclockwise from forward). No-return beams hold `+inf` and serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub timestamp: f64,
    pub angle_min: f64,
    pub angle_increment: f64,
    #[serde(serialize_with = "ser_ranges", deserialize_with = "de_ranges")]
    pub ranges: Vec<f64>,
}

impl LidarScan {
    pub fn bearing(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }

    /// Range of beam `i`, `None` for a no-return.
    pub fn range(&self, i: usize) -> Option<f64> {
        let r = self.ranges[i];
        r.is_finite().then_some(r)
    }
}

fn ser_ranges<S: Serializer>(ranges: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ranges.iter().map(|r| r.is_finite().then_some(*r)))
}

fn de_ranges<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let v: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(v.into_iter().map(|r| r.unwrap_or(f64::INFINITY)).collect())
}

/// Casts every beam against `segments` from `pose`.
///
/// Exact nearest ray-segment intersection per bearing. With a noise stream,
/// every beam draws one Gaussian sample (hit or not, so the stream advances by
/// a fixed amount per scan) that is added to the hit distance. Distances
/// outside `[range_min, range_max]` after noise become no-returns.
pub fn lidar_scan(
    segments: &[Segment<f64>],
    pose: &Pose<f64>,
    spec: &LidarSpec,
    noise: Option<&mut NoiseStream>,
    timestamp: f64,
) -> LidarScan {
    let origin = Vec2::new(pose.x, pose.y);
    let mut noise = noise;
    let ranges = (0..spec.beams)
        .map(|i| {
            let dir = Vec2::from_angle(pose.yaw + i as f64 * spec.angular_resolution);
            let hit = segments
                .iter()
                .filter_map(|s| ray_segment(origin, dir, s))
                .fold(f64::INFINITY, f64::min);
            let e = match noise.as_deref_mut() {
                Some(n) => n.gaussian(spec.noise_sigma),
                None => 0.0,
            };
            let r = hit + e;
            if r >= spec.range_min && r <= spec.range_max {
                r
            } else {
                f64::INFINITY
            }
        })
        .collect();
    LidarScan {
        timestamp,
        angle_min: 0.0,
        angle_increment: spec.angular_resolution,
        ranges,
    }
}

/// Decides which ticks carry a scan, using integer microseconds so a 1 s window
/// holds exactly `rate` scans at any step that divides a second. No scan at tick 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarCadence {
    dt_us: u64,
    rate_millihz: u64,
}

impl LidarCadence {
    pub fn new(dt: f64, rate_hz: f64) -> Self {
        Self {
            dt_us: (dt * 1e6).round() as u64,
            rate_millihz: (rate_hz * 1e3).round() as u64,
        }
    }

    fn index(&self, tick: u64) -> u64 {
        // number of scan periods fully elapsed by the end of `tick`
        (tick as u128 * self.dt_us as u128 * self.rate_millihz as u128 / 1_000_000_000) as u64
    }

    pub fn fires(&self, tick: u64) -> bool {
        tick > 0 && self.index(tick) > self.index(tick - 1)
    }
}
