//! Fixed featurization shared by recording and deployment.

use serde::{Deserialize, Serialize};

use crate::sensors::{LidarScan, SensorFrame};

/// Number of decimated LIDAR beams in a feature vector.
pub const FEATURE_BEAMS: usize = 36;
/// Beams plus forward speed.
pub const FEATURE_LEN: usize = FEATURE_BEAMS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub range_max: f64,
    /// Speed that maps to a feature value of 1.
    pub max_speed: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            range_max: 12.0,
            max_speed: 0.26,
        }
    }
}

/// Decimates `scan` to [`FEATURE_BEAMS`] evenly spaced beams starting at beam 0,
/// maps no-returns to `range_max`, divides by `range_max`, and appends the
/// forward speed over `max_speed` clamped to `[-1, 1]`.
pub fn featurize(scan: &LidarScan, vx: f64, spec: &FeatureSpec) -> Vec<f64> {
    let n = scan.ranges.len();
    let mut out = Vec::with_capacity(FEATURE_LEN);
    for k in 0..FEATURE_BEAMS {
        let r = scan.ranges[k * n / FEATURE_BEAMS];
        let r = if r.is_finite() {
            r.min(spec.range_max)
        } else {
            spec.range_max
        };
        out.push(r / spec.range_max);
    }
    out.push((vx / spec.max_speed).clamp(-1.0, 1.0));
    out
}

/// Reflects beam features about the forward axis. Beam `k` at bearing
/// `k * 10 deg` swaps with the beam at `-k * 10 deg`. Non-beam features are kept.
pub fn mirror_features(f: &[f64]) -> Vec<f64> {
    let mut out = f.to_vec();
    for k in 1..FEATURE_BEAMS {
        out[k] = f[FEATURE_BEAMS - k];
    }
    out
}

/// Forward speed from rear encoder ticks, measured between consecutive LIDAR frames.
#[derive(Debug, Clone)]
pub struct SpeedEstimator {
    meters_per_tick: f64,
    last: Option<([i64; 2], f64)>,
    speed: f64,
}

impl SpeedEstimator {
    pub fn new(wheel_radius: f64, cpr: u32) -> Self {
        Self {
            meters_per_tick: std::f64::consts::TAU * wheel_radius / cpr as f64,
            last: None,
            speed: 0.0,
        }
    }

    pub fn observe(&mut self, frame: &SensorFrame) -> f64 {
        if frame.lidar.is_some() {
            if let Some((enc, t)) = self.last {
                let dt = frame.t - t;
                if dt > 0.0 {
                    let ticks =
                        (frame.encoders[0] - enc[0] + frame.encoders[1] - enc[1]) as f64 * 0.5;
                    self.speed = ticks * self.meters_per_tick / dt;
                }
            }
            self.last = Some((frame.encoders, frame.t));
        }
        self.speed
    }

    pub fn reset(&mut self) {
        self.last = None;
        self.speed = 0.0;
    }
}

/// Stateful front end: feeds every frame to the speed estimator and returns
/// features on frames that carry a scan.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub spec: FeatureSpec,
    speed: SpeedEstimator,
}

impl Featurizer {
    pub fn new(spec: FeatureSpec, wheel_radius: f64, cpr: u32) -> Self {
        Self {
            spec,
            speed: SpeedEstimator::new(wheel_radius, cpr),
        }
    }

    pub fn observe(&mut self, frame: &SensorFrame) -> Option<Vec<f64>> {
        let vx = self.speed.observe(frame);
        frame
            .lidar
            .as_ref()
            .map(|scan| featurize(scan, vx, &self.spec))
    }

    pub fn reset(&mut self) {
        self.speed.reset();
    }
}
